//! Orchestration shared by the command-line tool and the tests.

use std::time::Instant;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fewparam_core::assembler::{assemble_linf, assemble_lp, assemble_three_param, three_param_n, Approximant, ThreeParamConfig};
use fewparam_core::blocks::{build_bit_extractor, build_mid_net, build_unpacker, UNPACK_CAP_BITS};
use fewparam_core::certify::{certify, CertConfig, CertReport, EvalMode, PointMap};
use fewparam_core::encoder::{pack_words, unpack_words};
use fewparam_core::net::{sweep_univariate, ExactEvaluator};
use fewparam_core::targets::{builtin, TargetFunction};
use fewparam_core::Dyadic;

use crate::config::{ModeChoice, Settings, TheoremKind};
use crate::json::TargetDoc;
use crate::summary::SummaryRow;

/// Largest `d n` built without `--force`.
pub const MAX_DN: u64 = 16;

/// Configuration refused by the size guard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("d n = {dn} exceeds the size guard of {limit} (about {estimated_params} parameters); pass --force to build anyway")]
pub struct SizeGuardExceeded {
    pub d: usize,
    pub n: u32,
    pub dn: u64,
    pub limit: u64,
    pub estimated_params: u128,
}

/// Parameter estimate from the per-part budgets, computed without building.
pub fn estimate_params(theorem: TheoremKind, d: usize, n: u32) -> u128 {
    let dn = (d as u32).saturating_mul(n).min(120);
    let (n, cells) = (n as u128, 1u128 << dn);
    let lp = 16 * cells + 32 * cells * n + 2 * n + 2;
    match theorem {
        TheoremKind::Lp => lp,
        TheoremKind::Linf => {
            let copies = 3u128.saturating_pow(d as u32);
            copies.saturating_mul(32 * cells + 256 * cells * n + n) + 2
        }
        TheoremKind::ThreeParam => {
            // The staircase has 2^(m n) units with m = 2 K^d.
            let mn = (2 * cells).saturating_mul(n).min(120) as u32;
            lp.saturating_add(3u128.saturating_mul(1u128 << mn)).saturating_add(n * 6 * 3)
        }
    }
}

pub fn size_guard(theorem: TheoremKind, d: usize, n: u32, force: bool) -> Result<(), SizeGuardExceeded> {
    let dn = d as u64 * n as u64;
    if dn > MAX_DN && !force {
        return Err(SizeGuardExceeded { d, n, dn, limit: MAX_DN, estimated_params: estimate_params(theorem, d, n) });
    }
    Ok(())
}

pub fn target_of(s: &Settings) -> anyhow::Result<TargetFunction> {
    Ok(builtin(&s.target, s.d, &s.target_options)?)
}

/// A built approximant with the target it was built for.
#[derive(Debug, Clone)]
pub struct Built {
    pub approx: Approximant,
    pub target: TargetFunction,
    pub target_doc: TargetDoc,
}

/// Builds the approximant described by `s`, with `n` overriding `s.n`.
pub fn build(s: &Settings, n: Option<u32>) -> anyhow::Result<Built> {
    let f = target_of(s)?;
    let target_doc = TargetDoc::new(&f.id, s.d, &s.target_options);
    let approx = match s.theorem {
        TheoremKind::Lp | TheoremKind::Linf => {
            let n = n.or(s.n).context("n is required")?;
            size_guard(s.theorem, s.d, n, s.force)?;
            if s.theorem == TheoremKind::Lp {
                assemble_lp(&f, n, s.p)?
            } else {
                assemble_linf(&f, n)?
            }
        }
        TheoremKind::ThreeParam => {
            let eps = s.eps.context("three-param needs eps")?;
            let mut cfg = ThreeParamConfig::new(eps);
            cfg.allow_semantic = s.allow_semantic;
            let (alpha, lambda) = f.modulus.holder_params().context("three-param needs a Hölder target")?;
            let n = three_param_n(s.d, alpha, lambda, eps, cfg.max_n)?;
            size_guard(s.theorem, s.d, n, s.force)?;
            assemble_three_param(&f, &cfg)?
        }
    };
    Ok(Built { approx, target: f, target_doc })
}

pub fn cert_config(s: &Settings, n: u32, mode: EvalMode) -> CertConfig {
    CertConfig { grid: s.grid(n), lp_per_cell: s.lp_per_cell(n), mc_samples: s.mc_samples, seed: s.seed, mode }
}

pub fn modes(choice: ModeChoice) -> &'static [EvalMode] {
    match choice {
        ModeChoice::Exact => &[EvalMode::Exact],
        ModeChoice::Float => &[EvalMode::Float],
        ModeChoice::Both => &[EvalMode::Exact, EvalMode::Float],
    }
}

/// Certifies one approximant in every requested mode.
pub fn certify_built<P: PointMap>(b: &Built, s: &Settings, pm: &P) -> anyhow::Result<Vec<CertReport>> {
    modes(s.mode)
        .iter()
        .map(|&mode| {
            let start = Instant::now();
            let mut rep = certify(&b.approx, &b.target, &cert_config(s, b.approx.n, mode), pm)?;
            if s.timing {
                rep.runtime_ms = Some(start.elapsed().as_millis() as u64);
            }
            Ok(rep)
        })
        .collect()
}

pub fn rows(reports: &[CertReport]) -> Vec<SummaryRow> {
    reports.iter().map(|r| SummaryRow::from_report(r, r.mode.name())).collect()
}

/// Outcome of an exhaustive or sampled gadget check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GadgetReport {
    pub gadget: String,
    pub cases: u64,
    pub passed: u64,
    pub pass: bool,
    /// First few mismatches.
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl GadgetReport {
    fn new(gadget: String) -> GadgetReport {
        GadgetReport { gadget, cases: 0, passed: 0, pass: true, failures: Vec::new(), notes: Vec::new() }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if ok {
            self.passed += 1;
        } else {
            self.pass = false;
            if self.failures.len() < 10 {
                self.failures.push(what());
            }
        }
    }
}

/// Largest `J` checked without `--force`.
pub const MAX_EXTRACTOR_J: u64 = 16;

/// `a = sum_j theta_j 4^-j` with `theta_j` bit `j - 1` of `code`.
pub fn base4_word(code: u64, jj: u64) -> Dyadic {
    let mut a = Dyadic::zero();
    for j in 1..=jj {
        if code >> (j - 1) & 1 == 1 {
            a += Dyadic::pow2(-2 * j as i64);
        }
    }
    a
}

/// Feeds `4^j a` for every `J`-digit word `a` and every `j`.
pub fn gadget_bit_extractor<P: PointMap>(jj: u64, force: bool, pm: &P) -> anyhow::Result<GadgetReport> {
    anyhow::ensure!(jj >= 1, "J must be at least 1");
    anyhow::ensure!(jj <= MAX_EXTRACTOR_J || force, "J = {jj} needs {} words; pass --force above {MAX_EXTRACTOR_J}", 1u128 << jj.min(127));
    let ev = ExactEvaluator::new(&build_bit_extractor(jj)?);
    let mut rep = GadgetReport::new(format!("bit-extractor J={jj}"));
    let words = 1usize << jj;
    let results = pm.map(words, |code| {
        let a = base4_word(code as u64, jj);
        (1..=jj)
            .map(|j| {
                let got = ev.evaluate(&[a.mul_pow2(2 * j as i64)]).map(|mut v| v.remove(0));
                let want = Dyadic::from(code as u64 >> (j - 1) & 1);
                match got {
                    Ok(v) if v == want => None,
                    Ok(v) => Some(format!("word {code}, j={j}: got {v}, want {want}")),
                    Err(e) => Some(format!("word {code}, j={j}: {e}")),
                }
            })
            .find_map(|x| x)
    });
    for r in results {
        rep.record(r.is_none(), || r.clone().unwrap_or_default());
    }
    rep.notes.push(format!("{words} words, {jj} digits each"));
    Ok(rep)
}

/// Number of random words checked when `m n` is too large for an
/// exhaustive sweep.
pub const PACK_RANDOM_WORDS: usize = 100;

/// Largest `m n` checked exhaustively.
pub const PACK_EXHAUSTIVE_BITS: u32 = 16;

/// Packs words, unpacks them with the network and compares.
pub fn gadget_pack(m: u32, n: u32, seed: u64) -> anyhow::Result<GadgetReport> {
    anyhow::ensure!(m >= 1 && n >= 1, "m and n must be at least 1");
    let bits = m.checked_mul(n).filter(|&b| b <= UNPACK_CAP_BITS).with_context(|| format!("m n must be at most {UNPACK_CAP_BITS}"))?;
    let net = build_unpacker(m, n)?;
    let mut words: Vec<u64> = if bits <= PACK_EXHAUSTIVE_BITS {
        (0..1u64 << bits).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..PACK_RANDOM_WORDS).map(|_| rng.gen_range(0..1u64 << bits)).collect()
    };
    words.sort_unstable();
    let chunks = |w: u64| -> Vec<Dyadic> { (1..=n).map(|i| Dyadic::from_ratio_pow2((w >> (m * (n - i)) & ((1 << m) - 1)) as i64, m)).collect() };
    let packed: Vec<Dyadic> = words.iter().map(|&w| pack_words(&chunks(w), m as u64)).collect::<Result<_, _>>()?;
    let swept = sweep_univariate(&net, &packed)?;
    let mut rep = GadgetReport::new(format!("pack m={m} n={n}"));
    for ((w, v), got) in words.iter().zip(&packed).zip(&swept) {
        let want = chunks(*w);
        let ok = *got == want && unpack_words(v, m as u64, n) == want;
        rep.record(ok, || format!("word {w}: got {got:?}, want {want:?}"));
    }
    rep.notes.push(if bits <= PACK_EXHAUSTIVE_BITS { format!("exhaustive over 2^{bits} words") } else { format!("{PACK_RANDOM_WORDS} random words, seed {seed}") });
    Ok(rep)
}

/// Named cases plus seeded random triples against a sorting oracle.
pub fn gadget_mid(seed: u64) -> anyhow::Result<GadgetReport> {
    let net = build_mid_net();
    let mut rep = GadgetReport::new("mid".into());
    let mut cases: Vec<[i64; 3]> = vec![[2, 1, 3], [3, 2, 3]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases.extend((0..1000).map(|_| [rng.gen_range(-64..=64), rng.gen_range(-64..=64), rng.gen_range(-64..=64)]));
    for c in cases {
        let x: Vec<Dyadic> = c.iter().map(|&v| Dyadic::from_ratio_pow2(v, 2)).collect();
        let got = net.evaluate_exact(&x)?.remove(0);
        let mut sorted = x.clone();
        sorted.sort();
        rep.record(got == sorted[1], || format!("mid{c:?}/4: got {got}, want {}", sorted[1]));
    }
    rep.notes.push("mid(2,1,3) = 2 and mid(3,2,3) = 3 plus 1000 random triples".into());
    Ok(rep)
}
