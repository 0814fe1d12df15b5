//! Property suites behind `splatlift verify`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{LiftConfig, RowMatrix};
use crate::rasterize::build_weight_matrix;
use crate::solver::{beta, bound_report, lift_rowsum, loss_surrogate, loss_true, lsq_oracle, FeatureField, Loss};
use crate::synthbench::{
    alpha_sum_stats, make_scene, mc_background_gradient, overall_alpha_mean, random_instance, InstanceLimits,
    SceneSpec,
};

pub const SUITES: &[&str] = &["bounds", "jensen", "alpha", "mc"];

pub const JENSEN_INSTANCES: usize = 100;
pub const BOUND_INSTANCES: usize = 500;
/// Relative tolerance on `J(x̂) = Σ(1+β_i)μ_i²`.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Relative slack on `L(x̂) ≤ L(x')`, covering the oracle's convergence tolerance.
pub const OPTIMALITY_SLACK: f64 = 1e-9;
pub const ALPHA_TARGET: f64 = 99.6;
pub const ALPHA_FLOOR: f64 = 99.0;
pub const MC_SAMPLES: usize = 100_000;
pub const MC_SCALES: [f64; 4] = [0.0, 0.25, 0.5, 1.0];
pub const MC_MAX_Z: f64 = 3.0;

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub summary: String,
    pub details: Vec<String>,
    /// Violated inequalities, with values.
    pub violations: Vec<String>,
    pub csv: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    match name {
        "jensen" => jensen_suite(seed, JENSEN_INSTANCES),
        "bounds" => bounds_suite(seed, BOUND_INSTANCES),
        "alpha" => alpha_suite(),
        "mc" => mc_suite(seed, MC_SAMPLES),
        other => Err(Error::invalid(format!("unknown suite '{other}' (expected {})", SUITES.join(", ")))),
    }
}

fn gaussian_field(p: usize, f: usize, seed: u64, index: u64) -> Result<FeatureField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a656e73656e);
    rng.set_stream(index);
    let v: Vec<f64> = (0..p * f).map(|_| StandardNormal.sample(&mut rng)).collect();
    FeatureField::new(RowMatrix::from_vec(p, f, v)?, vec![1.0; p])
}

/// `L(x) ≤ J(x)` on random row-stochastic instances, at the closed-form lift
/// and at a random field, for L1, L2 and Huber(1).
pub fn jensen_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let limits = InstanceLimits::default();
    let losses = [Loss::L1, Loss::L2, Loss::Huber(1.0)];
    let mut rep = SuiteReport::default();
    let mut clean = 0;
    for k in 0..instances {
        let inst = random_instance(seed, k as u64, &limits)?;
        let fields = [
            ("lift", lift_rowsum(&inst.a, &inst.b)?),
            ("random", gaussian_field(inst.a.cols(), inst.b.dim(), seed, k as u64)?),
        ];
        let before = rep.violations.len();
        for (which, x) in &fields {
            for loss in losses {
                let l = loss_true(&inst.a, &inst.b, x, loss)?;
                let j = loss_surrogate(&inst.a, &inst.b, x, loss)?;
                if !(l <= j) {
                    rep.violations.push(format!("instance {k} ({which} field), {loss}: L(x) = {l:e} > J(x) = {j:e}"));
                }
            }
        }
        if rep.violations.len() == before {
            clean += 1;
        }
    }
    rep.summary = format!("{clean}/{instances} instances: L ≤ J under L1, L2, Huber");
    Ok(rep)
}

/// Loss chain `L(x') ≤ J(x') ≤ J(x̂)`, the identity `J(x̂) = Σ(1+β_i)μ_i²`,
/// and `L(x̂) ≤ L(x')`. Emits the ratio `L(x')/L(x̂)` against `1 + β` as CSV.
pub fn bounds_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let limits = InstanceLimits::default();
    let mut rep = SuiteReport::default();
    let mut csv = String::from("instance,rows,primitives,dim,loss_true_xprime,loss_true_opt,ratio,one_plus_beta,within_bound\n");
    let (mut clean, mut within, mut worst_identity) = (0, 0, 0.0f64);
    for k in 0..instances {
        let inst = random_instance(seed, k as u64, &limits)?;
        let r = match bound_report(&inst.a, &inst.b) {
            Ok(r) => r,
            Err(Error::InvariantViolation(m)) => {
                rep.violations.push(format!("instance {k}: {m}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let before = rep.violations.len();
        let (ltp, lsp, lso, lto) = (r.loss_true_xprime, r.loss_surrogate_xprime, r.loss_surrogate_opt, r.loss_true_opt);
        if !(ltp <= lsp) {
            rep.violations.push(format!("instance {k}: L(x') = {ltp:e} > J(x') = {lsp:e}"));
        }
        if !(lsp <= lso) {
            rep.violations.push(format!("instance {k}: J(x') = {lsp:e} > J(x_hat) = {lso:e}"));
        }
        if !(lto <= ltp * (1.0 + OPTIMALITY_SLACK)) {
            rep.violations.push(format!("instance {k}: L(x_hat) = {lto:e} > L(x') = {ltp:e}"));
        }
        let an = inst.a.row_normalized();
        let xh = lsq_oracle(&an, &inst.b)?;
        let br = beta(&an, &inst.b, &xh)?;
        let sum: f64 = br.per_row.iter().zip(&br.mu).map(|(b, m)| (1.0 + b) * m * m).sum();
        let rel = (sum - lso).abs() / lso.abs().max(f64::MIN_POSITIVE);
        worst_identity = worst_identity.max(rel);
        if !(rel <= IDENTITY_TOL) {
            rep.violations.push(format!(
                "instance {k}: |J(x_hat) - Σ(1+β)μ²| / J(x_hat) = {rel:e} > {IDENTITY_TOL:e} (J = {lso:e}, sum = {sum:e})"
            ));
        }
        if rep.violations.len() == before {
            clean += 1;
        }
        within += r.within_beta_bound as usize;
        csv.push_str(&format!(
            "{k},{},{},{},{:e},{:e},{},{},{}\n",
            inst.a.rows(),
            inst.a.cols(),
            inst.b.dim(),
            ltp,
            lto,
            r.ratio,
            1.0 + r.beta,
            r.within_beta_bound
        ));
    }
    rep.summary = format!("{clean}/{instances} instances: L(x') ≤ J(x') ≤ J(x̂), J(x̂) = Σ(1+β)μ², L(x̂) ≤ L(x')");
    rep.details.push(format!("largest relative identity error {worst_identity:.3e}"));
    rep.details.push(format!("ratio within 1+β on {within}/{instances} instances (reported, not asserted)"));
    rep.csv = Some(csv);
    Ok(rep)
}

/// Mean per-ray alpha sum on the opaque-wall scene.
pub fn alpha_suite() -> Result<SuiteReport> {
    let spec = SceneSpec::preset("opaque-wall")?;
    let s = make_scene(&spec)?;
    let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::with_lambda(1.0))?;
    let mut rep = SuiteReport::default();
    for v in alpha_sum_stats(&a)? {
        rep.details.push(format!("{}: mean {:.3}% std {:.3}% over {} rays", v.view_id, v.mean, v.std, v.covered));
    }
    let mean = overall_alpha_mean(&a);
    rep.summary = format!("opaque wall mean alpha sum {mean:.3}% (target {ALPHA_TARGET}%, floor {ALPHA_FLOOR}%)");
    if mean < ALPHA_FLOOR {
        rep.violations.push(format!("mean alpha sum {mean:.4}% < {ALPHA_FLOOR}%"));
    } else if mean < ALPHA_TARGET {
        rep.details.push(format!("below the {ALPHA_TARGET}% target"));
    }
    Ok(rep)
}

/// Monte-Carlo background gradient against `(s - 1)/3`.
pub fn mc_suite(seed: u64, n: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    for s in MC_SCALES {
        let e = mc_background_gradient(s, n, seed)?;
        let z = e.z_score();
        rep.details.push(format!(
            "s = {s}: estimate {:+.6} vs (s-1)/3 = {:+.6}, SE {:.6}, |z| {z:.2}",
            e.estimate, e.analytic, e.standard_error
        ));
        if !(z <= MC_MAX_Z) {
            rep.violations.push(format!(
                "s = {s}: |estimate - (s-1)/3| = {:e} > {MC_MAX_Z}·SE = {:e}",
                (e.estimate - e.analytic).abs(),
                MC_MAX_Z * e.standard_error
            ));
        }
    }
    rep.summary = format!(
        "{}/{} scales within {MC_MAX_Z} SE at n = {n}",
        MC_SCALES.len() - rep.violations.len(),
        MC_SCALES.len()
    );
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_at_small_scale() {
        let r = jensen_suite(7, 5).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.summary, "5/5 instances: L ≤ J under L1, L2, Huber");
        let r = bounds_suite(3, 5).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.csv.unwrap().lines().count(), 6);
        assert!(run_suite("nope", 0).is_err());
    }
}
