//! JSON documents for approximants and certification reports.
//!
//! Every parameter is stored as an exact `{num, exp, origin}` triple meaning
//! `num / 2^exp`, with `num` a decimal string so arbitrarily large values
//! survive. Reading a document back yields an identical [`Approximant`].

use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use fewparam_core::assembler::{Approximant, PartAudit, Theorem, ThreeParamInfo};
use fewparam_core::certify::{CertReport, Check, LpMeasurement, SupMeasurement};
use fewparam_core::encoder::{BinaryCodeTable, IntrinsicParams};
use fewparam_core::net::{AffineLayer, InputBox, Interval, LayerBuilder};
use fewparam_core::targets::TargetOptions;
use fewparam_core::{Dyadic, ParamOrigin, ReluNetwork, ShapeAudit};

pub const APPROXIMANT_FORMAT: &str = "fewparam-approximant";
pub const FIXED_FORMAT: &str = "fewparam-fixed-structure";
pub const REPORT_FORMAT: &str = "fewparam-report";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a {expected} document (found {found:?})")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("bad numerator {0:?}")]
    BadNumber(String),
    #[error("inconsistent document: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] fewparam_core::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicDoc {
    pub num: String,
    pub exp: u32,
}

impl DyadicDoc {
    pub fn from_value(v: &Dyadic) -> DyadicDoc {
        DyadicDoc { num: v.numerator().to_string(), exp: v.exponent() }
    }

    pub fn to_value(&self) -> Result<Dyadic, FormatError> {
        let num = BigInt::from_str(&self.num).map_err(|_| FormatError::BadNumber(self.num.clone()))?;
        Ok(Dyadic::from_parts(num, self.exp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OriginDoc {
    Fixed,
    Intrinsic,
}

impl From<ParamOrigin> for OriginDoc {
    fn from(o: ParamOrigin) -> Self {
        match o {
            ParamOrigin::Fixed => OriginDoc::Fixed,
            ParamOrigin::Intrinsic => OriginDoc::Intrinsic,
        }
    }
}

impl From<OriginDoc> for ParamOrigin {
    fn from(o: OriginDoc) -> Self {
        match o {
            OriginDoc::Fixed => ParamOrigin::Fixed,
            OriginDoc::Intrinsic => ParamOrigin::Intrinsic,
        }
    }
}

/// One parameter. `num` and `exp` are absent in masked documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDoc {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub col: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub num: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exp: Option<u32>,
    pub origin: OriginDoc,
}

impl ParamDoc {
    fn new(row: Option<usize>, col: Option<usize>, v: &Dyadic, origin: ParamOrigin, mask: bool) -> ParamDoc {
        let hide = mask && origin.is_intrinsic();
        ParamDoc {
            row,
            col,
            num: (!hide).then(|| v.numerator().to_string()),
            exp: (!hide).then(|| v.exponent()),
            origin: origin.into(),
        }
    }

    fn value(&self) -> Result<Dyadic, FormatError> {
        match (&self.num, self.exp) {
            (Some(num), Some(exp)) => DyadicDoc { num: num.clone(), exp }.to_value(),
            _ => Err(FormatError::Inconsistent("masked parameter in a full document".into())),
        }
    }
}

/// Sparse layer: stored weights in row-major order, then one bias per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<ParamDoc>,
    pub biases: Vec<ParamDoc>,
}

impl LayerDoc {
    fn from_layer(l: &AffineLayer, mask: bool) -> LayerDoc {
        let mut weights = Vec::with_capacity(l.stored_weights());
        let mut biases = Vec::with_capacity(l.out_dim());
        for r in 0..l.out_dim() {
            for (c, v, t) in l.row(r) {
                weights.push(ParamDoc::new(Some(r), Some(c), v, t, mask));
            }
            biases.push(ParamDoc::new(None, None, l.bias(r), l.bias_tag(r), mask));
        }
        LayerDoc { out_dim: l.out_dim(), in_dim: l.in_dim(), weights, biases }
    }

    fn to_layer(&self) -> Result<AffineLayer, FormatError> {
        if self.biases.len() != self.out_dim {
            return Err(FormatError::Inconsistent(format!("{} biases for {} rows", self.biases.len(), self.out_dim)));
        }
        let mut b = LayerBuilder::new(self.out_dim, self.in_dim);
        for w in &self.weights {
            let (r, c) = w.row.zip(w.col).ok_or_else(|| FormatError::Inconsistent("weight without row/col".into()))?;
            if r >= self.out_dim || c >= self.in_dim {
                return Err(FormatError::Inconsistent(format!("weight ({r},{c}) outside {}x{}", self.out_dim, self.in_dim)));
            }
            b.weight_tagged(r, c, w.value()?, w.origin.into());
        }
        for (r, p) in self.biases.iter().enumerate() {
            b.bias_tagged(r, p.value()?, p.origin.into());
        }
        Ok(b.build())
    }
}

/// `[lo, hi]`, `null` for an open end.
pub type IntervalDoc = (Option<DyadicDoc>, Option<DyadicDoc>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub input_box: Vec<IntervalDoc>,
    pub layers: Vec<LayerDoc>,
}

impl NetworkDoc {
    pub fn from_network(net: &ReluNetwork, mask: bool) -> NetworkDoc {
        NetworkDoc {
            input_box: net.input_box().0.iter().map(|iv| (iv.lo.as_ref().map(DyadicDoc::from_value), iv.hi.as_ref().map(DyadicDoc::from_value))).collect(),
            layers: net.layers().iter().map(|l| LayerDoc::from_layer(l, mask)).collect(),
        }
    }

    pub fn to_network(&self) -> Result<ReluNetwork, FormatError> {
        let opt = |v: &Option<DyadicDoc>| v.as_ref().map(DyadicDoc::to_value).transpose();
        let ivs = self.input_box.iter().map(|(lo, hi)| Ok(Interval { lo: opt(lo)?, hi: opt(hi)? })).collect::<Result<Vec<_>, FormatError>>()?;
        let layers = self.layers.iter().map(LayerDoc::to_layer).collect::<Result<Vec<_>, _>>()?;
        Ok(ReluNetwork::new(layers, InputBox(ivs))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TheoremDoc {
    Lp { p: u32 },
    Linf,
    ThreeParam { eps: f64 },
}

impl From<Theorem> for TheoremDoc {
    fn from(t: Theorem) -> Self {
        match t {
            Theorem::Lp { p } => TheoremDoc::Lp { p },
            Theorem::Linf => TheoremDoc::Linf,
            Theorem::ThreeParam { eps } => TheoremDoc::ThreeParam { eps },
        }
    }
}

impl From<TheoremDoc> for Theorem {
    fn from(t: TheoremDoc) -> Self {
        match t {
            TheoremDoc::Lp { p } => Theorem::Lp { p },
            TheoremDoc::Linf => Theorem::Linf,
            TheoremDoc::ThreeParam { eps } => Theorem::ThreeParam { eps },
        }
    }
}

/// Target identity, enough to rebuild it with `targets::builtin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDoc {
    pub id: String,
    pub d: usize,
    pub constant: f64,
    pub seed: u64,
    pub pieces: usize,
}

impl TargetDoc {
    pub fn new(id: &str, d: usize, opts: &TargetOptions) -> TargetDoc {
        TargetDoc { id: id.into(), d, constant: opts.constant, seed: opts.seed, pieces: opts.pieces }
    }

    pub fn options(&self) -> TargetOptions {
        TargetOptions { constant: self.constant, seed: self.seed, pieces: self.pieces }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditDoc {
    pub width: usize,
    pub depth: usize,
    pub total_params: u64,
    pub intrinsic_params: u64,
    pub fixed_params: u64,
    pub nonzero_params: u64,
}

impl From<&ShapeAudit> for AuditDoc {
    fn from(a: &ShapeAudit) -> Self {
        AuditDoc {
            width: a.width,
            depth: a.depth,
            total_params: a.total_params,
            intrinsic_params: a.intrinsic_params,
            fixed_params: a.fixed_params,
            nonzero_params: a.nonzero_params,
        }
    }
}

impl From<&AuditDoc> for ShapeAudit {
    fn from(a: &AuditDoc) -> Self {
        ShapeAudit {
            width: a.width,
            depth: a.depth,
            total_params: a.total_params,
            intrinsic_params: a.intrinsic_params,
            fixed_params: a.fixed_params,
            nonzero_params: a.nonzero_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartDoc {
    pub name: String,
    pub audit: AuditDoc,
    pub budget: Option<u64>,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrinsicDoc {
    pub s: DyadicDoc,
    pub b: DyadicDoc,
    pub a: Vec<DyadicDoc>,
    pub m: u64,
    pub packed_v: Option<DyadicDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeParamDoc {
    pub range: DyadicDoc,
    pub scale: DyadicDoc,
    pub r: u32,
    pub mult_bound: DyadicDoc,
    pub pure_network: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximantDoc {
    pub format: String,
    pub version: u32,
    pub theorem: TheoremDoc,
    pub target: TargetDoc,
    pub d: usize,
    pub n: u32,
    pub delta: DyadicDoc,
    pub audit: AuditDoc,
    pub intrinsic: IntrinsicDoc,
    pub codes: Vec<u64>,
    pub three_param: Option<ThreeParamDoc>,
    pub parts: Vec<PartDoc>,
    pub notes: Vec<String>,
    pub network: NetworkDoc,
}

/// Network skeleton with every intrinsic value removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDoc {
    pub format: String,
    pub version: u32,
    pub theorem: TheoremDoc,
    pub d: usize,
    pub n: u32,
    pub delta: DyadicDoc,
    pub network: NetworkDoc,
}

pub fn approximant_doc(ap: &Approximant, target: &TargetDoc) -> ApproximantDoc {
    let dd = DyadicDoc::from_value;
    ApproximantDoc {
        format: APPROXIMANT_FORMAT.into(),
        version: FORMAT_VERSION,
        theorem: ap.theorem.into(),
        target: target.clone(),
        d: ap.d,
        n: ap.n,
        delta: dd(&ap.delta),
        audit: (&ap.audit()).into(),
        intrinsic: IntrinsicDoc {
            s: dd(&ap.params.s),
            b: dd(&ap.params.b),
            a: ap.params.a.iter().map(dd).collect(),
            m: ap.params.m,
            packed_v: ap.params.packed_v.as_ref().map(dd),
        },
        codes: ap.table.codes.clone(),
        three_param: ap.three_param.as_ref().map(|t| ThreeParamDoc {
            range: dd(&t.range),
            scale: dd(&t.scale),
            r: t.r,
            mult_bound: dd(&t.mult_bound),
            pure_network: t.pure_network,
        }),
        parts: ap
            .parts
            .iter()
            .map(|p| PartDoc { name: p.name.clone(), audit: (&p.audit).into(), budget: p.budget, within_budget: p.within_budget() })
            .collect(),
        notes: ap.notes.clone(),
        network: NetworkDoc::from_network(&ap.net, false),
    }
}

pub fn fixed_doc(ap: &Approximant) -> FixedDoc {
    FixedDoc {
        format: FIXED_FORMAT.into(),
        version: FORMAT_VERSION,
        theorem: ap.theorem.into(),
        d: ap.d,
        n: ap.n,
        delta: DyadicDoc::from_value(&ap.delta),
        network: NetworkDoc::from_network(&ap.net, true),
    }
}

/// Pretty-printed approximant document.
pub fn to_json(ap: &Approximant, target: &TargetDoc) -> String {
    let mut s = serde_json::to_string_pretty(&approximant_doc(ap, target)).expect("documents always serialize");
    s.push('\n');
    s
}

/// Pretty-printed fixed substructure.
pub fn fixed_json(ap: &Approximant) -> String {
    let mut s = serde_json::to_string_pretty(&fixed_doc(ap)).expect("documents always serialize");
    s.push('\n');
    s
}

/// Parses an approximant document, returning it with its target identity.
pub fn from_json(text: &str) -> Result<(Approximant, TargetDoc), FormatError> {
    let doc: ApproximantDoc = serde_json::from_str(text)?;
    if doc.format != APPROXIMANT_FORMAT {
        return Err(FormatError::WrongFormat { expected: APPROXIMANT_FORMAT, found: doc.format });
    }
    if doc.version != FORMAT_VERSION {
        return Err(FormatError::Version(doc.version));
    }
    let net = doc.network.to_network()?;
    if net.input_dim() != doc.d || net.output_dim() != 1 {
        return Err(FormatError::Inconsistent(format!("network is {} -> {}, expected {} -> 1", net.input_dim(), net.output_dim(), doc.d)));
    }
    let i = &doc.intrinsic;
    let params = IntrinsicParams {
        s: i.s.to_value()?,
        b: i.b.to_value()?,
        a: i.a.iter().map(DyadicDoc::to_value).collect::<Result<_, _>>()?,
        n: doc.n,
        m: i.m,
        packed_v: i.packed_v.as_ref().map(DyadicDoc::to_value).transpose()?,
    };
    let three_param = doc
        .three_param
        .as_ref()
        .map(|t| -> Result<ThreeParamInfo, FormatError> {
            Ok(ThreeParamInfo { range: t.range.to_value()?, scale: t.scale.to_value()?, r: t.r, mult_bound: t.mult_bound.to_value()?, pure_network: t.pure_network })
        })
        .transpose()?;
    let ap = Approximant {
        theorem: doc.theorem.into(),
        target_id: doc.target.id.clone(),
        d: doc.d,
        n: doc.n,
        delta: doc.delta.to_value()?,
        net,
        params,
        table: BinaryCodeTable { d: doc.d, n: doc.n, codes: doc.codes },
        parts: doc.parts.iter().map(|p| PartAudit { name: p.name.clone(), audit: (&p.audit).into(), budget: p.budget }).collect(),
        three_param,
        notes: doc.notes,
    };
    Ok((ap, doc.target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckDoc {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl From<&Check> for CheckDoc {
    fn from(c: &Check) -> Self {
        CheckDoc { name: c.name.clone(), measured: c.measured, bound: c.bound, pass: c.pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupDoc {
    pub value: f64,
    pub exact: Option<DyadicDoc>,
    pub argmax: Vec<f64>,
    pub points: usize,
    pub skipped: usize,
    pub float_error: f64,
}

impl From<&SupMeasurement> for SupDoc {
    fn from(m: &SupMeasurement) -> Self {
        SupDoc { value: m.value, exact: m.exact.as_ref().map(DyadicDoc::from_value), argmax: m.argmax.clone(), points: m.points, skipped: m.skipped, float_error: m.float_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpDoc {
    pub p: u32,
    pub quadrature: f64,
    pub quadrature_points: usize,
    pub monte_carlo: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub mc_samples: usize,
}

impl From<&LpMeasurement> for LpDoc {
    fn from(m: &LpMeasurement) -> Self {
        LpDoc { p: m.p, quadrature: m.quadrature, quadrature_points: m.quadrature_points, monte_carlo: m.monte_carlo, mc_stderr: m.mc_stderr, mc_samples: m.mc_samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format: String,
    pub version: u32,
    pub theorem: TheoremDoc,
    pub target: String,
    pub d: usize,
    pub n: u32,
    pub delta: DyadicDoc,
    pub eval_mode: String,
    pub grid: String,
    pub pass: bool,
    pub bound: f64,
    pub bound_outside: f64,
    pub checks: Vec<CheckDoc>,
    pub sup_outside: Option<SupDoc>,
    pub sup_full: Option<SupDoc>,
    pub lp: Option<LpDoc>,
    pub audit: AuditDoc,
    pub parts: Vec<PartDoc>,
    pub float_rounded: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_ms: Option<u64>,
}

pub fn report_doc(r: &CertReport) -> ReportDoc {
    ReportDoc {
        format: REPORT_FORMAT.into(),
        version: FORMAT_VERSION,
        theorem: r.theorem.into(),
        target: r.target.clone(),
        d: r.d,
        n: r.n,
        delta: DyadicDoc::from_value(&r.delta),
        eval_mode: r.mode.name().into(),
        grid: r.grid.describe(),
        pass: r.pass,
        bound: r.bound,
        bound_outside: r.bound_outside,
        checks: r.checks.iter().map(CheckDoc::from).collect(),
        sup_outside: r.sup_outside.as_ref().map(SupDoc::from),
        sup_full: r.sup_full.as_ref().map(SupDoc::from),
        lp: r.lp.as_ref().map(LpDoc::from),
        audit: (&r.audit).into(),
        parts: r
            .parts
            .iter()
            .map(|p| PartDoc { name: p.name.clone(), audit: (&p.audit).into(), budget: p.budget, within_budget: p.within_budget() })
            .collect(),
        float_rounded: r.float_rounded,
        notes: r.notes.clone(),
        runtime_ms: r.runtime_ms,
    }
}
