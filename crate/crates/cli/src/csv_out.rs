//! CSV emission. All files are RFC-4180 with mandatory headers, UTF-8, and
//! `\n` line endings; floats are printed with 17 significant digits so
//! identical runs produce byte-identical files and values round-trip
//! exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use lqg_core::adaptive::RunTrace;
use lqg_core::experiment::AlgoAggregate;

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_regret_mean(dir: &Path, aggregates: &[AlgoAggregate]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("regret_mean.csv"))?);
    w.write_all(b"t,algo,mean,std,n\n")?;
    for agg in aggregates {
        for (t, (mean, std)) in agg.mean_regret.iter().zip(&agg.std_regret).enumerate() {
            writeln!(
                w,
                "{t},{},{},{},{}",
                agg.algorithm,
                fmt_f64(*mean),
                fmt_f64(*std),
                agg.n_runs
            )?;
        }
    }
    w.flush()
}

pub fn write_fim_lambda_min(dir: &Path, aggregates: &[AlgoAggregate]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("fim_lambda_min.csv"))?);
    w.write_all(b"t,algo,mean,std,stride_flag\n")?;
    for agg in aggregates {
        for t in 0..agg.mean_lambda_min.len() {
            let fresh = agg.lambda_fresh.get(t).copied().unwrap_or(false);
            writeln!(
                w,
                "{t},{},{},{},{}",
                agg.algorithm,
                fmt_f64(agg.mean_lambda_min[t]),
                fmt_f64(agg.std_lambda_min[t]),
                u8::from(fresh)
            )?;
        }
    }
    w.flush()
}

pub fn write_summary(dir: &Path, aggregates: &[AlgoAggregate]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    w.write_all(b"algo,mean_avg_cost,std_avg_cost,mean_switch_step,failed_runs,J_star\n")?;
    for agg in aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            agg.algorithm,
            fmt_f64(agg.mean_avg_cost),
            fmt_f64(agg.std_avg_cost),
            fmt_opt(agg.mean_switch_step),
            agg.failed.len(),
            fmt_f64(agg.j_star)
        )?;
    }
    w.flush()
}

pub fn write_trace(dir: &Path, trace: &RunTrace) -> std::io::Result<()> {
    let name = format!("trace_{}_{}.csv", trace.algorithm, trace.seed);
    let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
    w.write_all(b"t,episode,cost,regret,sigma_eta_sq,lambda_min,min_sv_gram,markov_error\n")?;
    let mut diag_iter = trace.episode_diag.iter().peekable();
    for t in 0..trace.len() {
        let (min_sv, merr) = match diag_iter.peek() {
            Some(d) if d.t == t as u64 => {
                let d = diag_iter.next().expect("peeked");
                (Some(d.min_sv_gram), d.markov_error)
            }
            _ => (None, None),
        };
        writeln!(
            w,
            "{t},{},{},{},{},{},{},{}",
            trace.episode[t],
            fmt_f64(trace.cost[t]),
            fmt_f64(trace.regret[t]),
            fmt_f64(trace.sigma_eta_sq[t]),
            fmt_f64(trace.lambda_min[t]),
            fmt_opt(min_sv),
            fmt_opt(merr)
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_aggregate_set_writes_header_only_files() {
        let dir = std::env::temp_dir().join(format!("lqg-csv-empty-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        write_regret_mean(&dir, &[]).unwrap();
        write_fim_lambda_min(&dir, &[]).unwrap();
        write_summary(&dir, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.join("regret_mean.csv")).unwrap(),
            "t,algo,mean,std,n\n"
        );
        assert_eq!(
            std::fs::read_to_string(dir.join("summary.csv")).unwrap(),
            "algo,mean_avg_cost,std_avg_cost,mean_switch_step,failed_runs,J_star\n"
        );
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn float_format_is_fixed_width_17_significant() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        assert_eq!(fmt_f64(f64::NAN), "");
        // 17 significant digits round-trip any double exactly.
        for v in [0.0707, 0.07006360539254942, 1.0 / 3.0, 1e-300, -42.5] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "failed for {s}");
        }
    }
}
