//! One CSV row per certified configuration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use fewparam_core::assembler::Theorem;
use fewparam_core::certify::CertReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub target: String,
    pub theorem: String,
    pub d: usize,
    pub n: u32,
    pub p: String,
    pub delta: f64,
    pub measured_sup: f64,
    pub measured_lp: String,
    pub bound: f64,
    pub pass: bool,
    pub intrinsic_params: u64,
    pub total_params: u64,
    pub eval_mode: String,
    pub runtime_ms: String,
}

impl SummaryRow {
    /// `eval_mode` overrides the report's own mode, for `both` runs.
    pub fn from_report(r: &CertReport, eval_mode: &str) -> SummaryRow {
        let p = match r.theorem {
            Theorem::Lp { p } => p.to_string(),
            Theorem::Linf => "inf".into(),
            Theorem::ThreeParam { .. } => "inf".into(),
        };
        let sup = r.sup_full.as_ref().or(r.sup_outside.as_ref()).map_or(0.0, |m| m.value);
        SummaryRow {
            target: r.target.clone(),
            theorem: r.theorem.name().into(),
            d: r.d,
            n: r.n,
            p,
            delta: r.delta.to_f64(),
            measured_sup: sup,
            measured_lp: r.lp.as_ref().map(|l| l.quadrature.to_string()).unwrap_or_default(),
            bound: r.bound,
            pass: r.pass,
            intrinsic_params: r.audit.intrinsic_params,
            total_params: r.audit.total_params,
            eval_mode: eval_mode.into(),
            runtime_ms: r.runtime_ms.map(|t| t.to_string()).unwrap_or_default(),
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(text: &str) -> anyhow::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
