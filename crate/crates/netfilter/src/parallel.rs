//! Parallel simulation studies. Networks are independent and seeded from the
//! study seed and their index, so results do not depend on the thread count.

use log::{debug, warn};
use netfilter_core::evaluate::{
    aggregate, run_multi_target_network, run_single_target_network, EvalReport, MethodId, NetworkOutcome, SimConfig,
};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Worker pool with `threads` threads (all available cores when `None`).
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(CliError::config("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start worker threads: {e}")))
}

pub fn run_study(cfg: &SimConfig, methods: &[MethodId], threads: Option<usize>) -> Result<EvalReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(CliError::config("no methods selected"));
    }
    let per_network = if cfg.is_multi_target() { run_multi_target_network } else { run_single_target_network };
    let results: Vec<(usize, netfilter_core::Result<NetworkOutcome>)> = pool(threads)?.install(|| {
        (0..cfg.n_networks)
            .into_par_iter()
            .map(|net| {
                debug!("network {net}");
                (net, per_network(cfg, methods, net))
            })
            .collect()
    });
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (net, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                warn!("network {net} failed: {e}");
                failed += 1;
            }
        }
    }
    if outcomes.is_empty() {
        return Err(CliError::runtime("every network in the study failed"));
    }
    let mut report = aggregate(cfg, methods, &outcomes)?;
    report.failed_networks = failed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use netfilter_core::evaluate::{run_multi_target_study, run_single_target_study, Preset};

    #[test]
    fn matches_serial_study() {
        let cfg = SimConfig { n_networks: 3, ..Preset::Table1.config() };
        let methods = [MethodId::MultiNf, MethodId::Hotelling];
        let serial = run_single_target_study(&cfg, &methods).unwrap();
        assert_eq!(run_study(&cfg, &methods, Some(3)).unwrap(), serial);
        assert_eq!(run_study(&cfg, &methods, Some(1)).unwrap(), serial);

        let cfg = SimConfig { n_networks: 2, use_true_precision: true, ..Preset::Table3.config() };
        let methods = [MethodId::SeqMultiNf, MethodId::MultiNf];
        assert_eq!(run_study(&cfg, &methods, Some(2)).unwrap(), run_multi_target_study(&cfg, &methods).unwrap());
    }

    #[test]
    fn rejects_zero_threads() {
        assert_eq!(pool(Some(0)).unwrap_err().exit_code(), 2);
    }
}
