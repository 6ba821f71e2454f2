//! File writers. Floats carry 17 significant digits; CSV column order is
//! fixed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nestmlmc::rates::ExpansionCheck;
use nestmlmc::{EstimateResult, RateReport};
use serde::Serialize;

use crate::error::CliError;

pub const LEVELS_HEADER: &str = "level,h_j,N_j,mean,var,cost,weight";
pub const RATES_HEADER: &str = "fit,alpha_hat,c1_hat,beta_hat,V1_hat,exponent_se,r_squared,inconclusive";
pub const SWEEP_HEADER: &str = "family,epsilon,rmse,cost,cost_ratio_vs_crude,status";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

pub fn write_levels<W: Write>(mut w: W, r: &EstimateResult) -> std::io::Result<()> {
    writeln!(w, "{LEVELS_HEADER}")?;
    for l in &r.levels {
        writeln!(w, "{},{},{},{},{},{},{}", l.level, num(l.h), l.n, num(l.mean), num(l.var), num(l.cost), num(l.weight))?;
    }
    w.flush()
}

pub fn write_rate_summary<W: Write>(mut w: W, rows: &[(&str, &RateReport)]) -> std::io::Result<()> {
    writeln!(w, "{RATES_HEADER}")?;
    for (name, r) in rows {
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{}",
            opt(r.alpha_hat),
            opt(r.c1_hat),
            opt(r.beta_hat),
            opt(r.v1_hat),
            opt(r.exponent_se),
            opt(r.r_squared),
            r.inconclusive
        )?;
    }
    w.flush()
}

pub fn write_expansion<W: Write>(mut w: W, e: &ExpansionCheck) -> std::io::Result<()> {
    writeln!(w, "x,cdf0,p1_integral,first_order_rel_error,remainder_slope,remainder_r_squared")?;
    for r in &e.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(r.x),
            num(r.cdf0),
            num(r.p1_integral),
            opt(r.first_order_rel_error),
            opt(r.remainder_slope),
            opt(r.remainder_r_squared)
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "NaN");
    }
}
