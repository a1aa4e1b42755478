//! Summaries over completed runs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cpinn::constitutive::ParamName;
use cpinn::pinn::TermName;
use cpinn::train::{fmt17, TrainReport};

use crate::commands::REPORT_FILE;
use crate::error::{CliError, Result};

pub const PARAMS_CSV: &str = "params_vs_epoch.csv";
pub const LOSS_CSV: &str = "loss_vs_epoch.csv";
pub const ERRORS_CSV: &str = "error_summary.csv";

/// Order statistics of one parameter's relative errors across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub param: ParamName,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub runs: Vec<(String, TrainReport)>,
    pub errors: Vec<ErrorRow>,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn error_rows(reports: &[&TrainReport]) -> Vec<ErrorRow> {
    let params: BTreeSet<ParamName> = reports
        .iter()
        .filter_map(|r| r.relative_errors.as_ref())
        .flat_map(|m| m.keys().copied())
        .collect();
    params
        .into_iter()
        .map(|p| {
            let mut v: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.relative_errors.as_ref()?.get(&p).copied())
                .collect();
            v.sort_by(f64::total_cmp);
            ErrorRow {
                param: p,
                n: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect()
}

/// Runs under `dir`: the directory itself and its immediate
/// subdirectories, in name order.
pub fn find_runs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut runs = Vec::new();
    if dir.join(REPORT_FILE).is_file() {
        runs.push((".".to_string(), dir.join(REPORT_FILE)));
    }
    if dir.is_dir() {
        let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(REPORT_FILE).is_file())
            .collect();
        subs.sort();
        for s in subs {
            let name = s.file_name().expect("entry").to_string_lossy().into_owned();
            runs.push((name, s.join(REPORT_FILE)));
        }
    }
    if runs.is_empty() {
        return Err(CliError::MissingRun(dir.to_path_buf()));
    }
    Ok(runs)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn put<W: std::io::Write>(w: &mut csv::Writer<W>, row: &[String], path: &Path) -> Result<()> {
    w.write_record(row)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reads every run under `dir` and writes the parameter, loss and error
/// tables next to them.
pub fn cmd_report(dir: &Path) -> Result<Summary> {
    let mut runs = Vec::new();
    for (name, path) in find_runs(dir)? {
        let r = TrainReport::load(&path).map_err(|e| CliError::from(e).context(name.clone()))?;
        runs.push((name, r));
    }

    let params: BTreeSet<ParamName> = runs.iter().flat_map(|(_, r)| r.trainable.clone()).collect();
    let terms: BTreeSet<TermName> = runs
        .iter()
        .flat_map(|(_, r)| r.trajectories.iter().flat_map(|t| t.terms.keys().copied()))
        .collect();
    let cell = |v: Option<&f64>| v.map(|x| fmt17(*x)).unwrap_or_default();

    let p = dir.join(PARAMS_CSV);
    let mut w = writer(&p)?;
    let mut head = vec!["run".to_string(), "epoch".to_string()];
    head.extend(params.iter().map(|x| x.as_str().to_string()));
    put(&mut w, &head, &p)?;
    for (name, r) in &runs {
        for t in &r.trajectories {
            let mut row = vec![name.clone(), t.epoch.to_string()];
            row.extend(params.iter().map(|x| cell(t.params.get(x))));
            put(&mut w, &row, &p)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;

    let p = dir.join(LOSS_CSV);
    let mut w = writer(&p)?;
    let mut head = vec!["run", "epoch", "lr", "total"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    head.extend(terms.iter().map(|x| x.as_str().to_string()));
    put(&mut w, &head, &p)?;
    for (name, r) in &runs {
        for t in &r.trajectories {
            let mut row = vec![name.clone(), t.epoch.to_string(), fmt17(t.lr), fmt17(t.total)];
            row.extend(terms.iter().map(|x| cell(t.terms.get(x))));
            put(&mut w, &row, &p)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;

    let errors = error_rows(&runs.iter().map(|(_, r)| r).collect::<Vec<_>>());
    let p = dir.join(ERRORS_CSV);
    let mut w = writer(&p)?;
    put(
        &mut w,
        &["param", "n", "min", "q1", "median", "q3", "max"].map(String::from),
        &p,
    )?;
    for e in &errors {
        put(
            &mut w,
            &[
                e.param.as_str().to_string(),
                e.n.to_string(),
                fmt17(e.min),
                fmt17(e.q1),
                fmt17(e.median),
                fmt17(e.q3),
                fmt17(e.max),
            ],
            &p,
        )?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    Ok(Summary { runs, errors })
}

impl Summary {
    /// Plain-text table of the error statistics.
    pub fn table(&self) -> String {
        let mut s = format!("{} run(s)\n", self.runs.len());
        s.push_str(&format!(
            "{:<10} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "param", "n", "min", "q1", "median", "q3", "max"
        ));
        for e in &self.errors {
            s.push_str(&format!(
                "{:<10} {:>4} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}\n",
                e.param.as_str(),
                e.n,
                e.min,
                e.q1,
                e.median,
                e.q3,
                e.max
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles_of_small_samples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn empty_directory_is_a_missing_run() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(cmd_report(dir.path()), Err(CliError::MissingRun(_))));
    }

    proptest! {
        #[test]
        fn quantiles_are_ordered(mut v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            v.sort_by(f64::total_cmp);
            let q: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&q| quantile(&v, q)).collect();
            prop_assert_eq!(q[0], v[0]);
            prop_assert_eq!(q[4], v[v.len() - 1]);
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
