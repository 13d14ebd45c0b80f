//! Exact small-instance posteriors for validating the game as a sampler.
//!
//! With perception disabled and the latents held fixed, the posterior over
//! sign vectors is computable in closed form: enumerate every assignment,
//! score it by the uniform sign prior times each agent's normal-Wishart
//! marginal evidence over the induced partition. The game's empirical sign
//! frequencies must match those exact marginals.

use crate::data::{synthesize_inter_gmm, SyntheticSpec};
use crate::game::{run, Condition, GameConfig, GameError};
use crate::gmm::evidence::nw_log_marginal;
use crate::probability::{log_sum_exp, NwHyper};
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct OracleConfig<S> {
    pub k: usize,
    pub d: usize,
    pub latent_dim: usize,
    pub hyper: NwHyper<S>,
    pub seed: u64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub condition: Condition,
}

impl<S: Scalar> OracleConfig<S> {
    /// The reference instance: K=2, D=6, L=2, 200k sweeps.
    pub fn reference(seed: u64, condition: Condition) -> Self {
        Self {
            k: 2,
            d: 6,
            latent_dim: 2,
            hyper: NwHyper::defaults(2),
            seed,
            sweeps: 200_000,
            burn_in: 10_000,
            condition,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    /// Exact per-object marginals `P(w_d = k | z_a, z_b)`, D × K.
    pub exact: Vec<Vec<f64>>,
    /// Total variation distance per object, listener side (agent B).
    pub tv_b: Vec<f64>,
    /// Total variation distance per object, agent A.
    pub tv_a: Vec<f64>,
    pub sweeps: usize,
    pub condition: Condition,
}

impl OracleReport {
    pub fn max_tv_b(&self) -> f64 {
        self.tv_b.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_tv_a(&self) -> f64 {
        self.tv_a.iter().cloned().fold(0.0, f64::max)
    }
}

/// Exact sign-vector posterior marginals by full enumeration: score each of
/// the K^D assignments with `Σ_d log π + Σ_k log m_A(partition_k) + Σ_k log
/// m_B(partition_k)` and reduce to per-object marginals.
pub fn enumerate_sign_marginals<S: Scalar>(
    z_a: &[Vec<S>],
    z_b: &[Vec<S>],
    hyper: &NwHyper<S>,
    k: usize,
) -> Result<Vec<Vec<f64>>, GameError> {
    let d = z_a.len();
    assert_eq!(d, z_b.len());
    let total = k.pow(d as u32);
    assert!(total <= 1 << 20, "enumeration too large: K^D = {total}");
    let log_pi = -(k as f64).ln();

    let mut log_scores = Vec::with_capacity(total);
    let mut assignment = vec![0usize; d];
    for idx in 0..total {
        let mut rem = idx;
        for a in assignment.iter_mut() {
            *a = rem % k;
            rem /= k;
        }
        let mut score = d as f64 * log_pi;
        for comp in 0..k {
            let part_a: Vec<&[S]> = (0..d)
                .filter(|&i| assignment[i] == comp)
                .map(|i| z_a[i].as_slice())
                .collect();
            let part_b: Vec<&[S]> = (0..d)
                .filter(|&i| assignment[i] == comp)
                .map(|i| z_b[i].as_slice())
                .collect();
            score += nw_log_marginal(hyper, &part_a)?;
            score += nw_log_marginal(hyper, &part_b)?;
        }
        log_scores.push(score);
    }
    let lse = log_sum_exp(&log_scores);
    let mut marginals = vec![vec![0.0f64; k]; d];
    for (idx, ls) in log_scores.iter().enumerate() {
        let p = (ls - lse).exp();
        let mut rem = idx;
        for marg in marginals.iter_mut() {
            marg[rem % k] += p;
            rem /= k;
        }
    }
    Ok(marginals)
}

/// Runs the joint oracle check end to end through the game loop: exact
/// enumerated marginals vs empirical sign frequencies over the sweeps.
pub fn posterior_agreement_suite<S: Scalar>(
    cfg: &OracleConfig<S>,
) -> Result<OracleReport, GameError> {
    let spec = SyntheticSpec {
        k: cfg.k,
        d: cfg.d,
        latent_dim: cfg.latent_dim,
        hyper: cfg.hyper.clone(),
        seed: cfg.seed,
    };
    let inst = synthesize_inter_gmm(&spec).map_err(|e| GameError::Config(e.to_string()))?;
    let exact = enumerate_sign_marginals(&inst.z_a, &inst.z_b, &cfg.hyper, cfg.k)?;

    let mut game_cfg = GameConfig::latent_game(cfg.k, cfg.latent_dim, cfg.sweeps, cfg.seed);
    game_cfg.condition = cfg.condition;
    game_cfg.hyper = cfg.hyper.clone();
    let outcome = run(&game_cfg, &inst.z_a, &inst.z_b, &inst.w_true)?;

    let mut counts_a = vec![vec![0usize; cfg.k]; cfg.d];
    let mut counts_b = vec![vec![0usize; cfg.k]; cfg.d];
    let mut kept = 0usize;
    for rec in &outcome.trace.iterations {
        if rec.t <= cfg.burn_in {
            continue;
        }
        kept += 1;
        for d in 0..cfg.d {
            counts_a[d][rec.w_a[d]] += 1;
            counts_b[d][rec.w_b[d]] += 1;
        }
    }
    let tv = |counts: &[Vec<usize>]| -> Vec<f64> {
        counts
            .iter()
            .zip(&exact)
            .map(|(c, e)| {
                0.5 * c
                    .iter()
                    .zip(e)
                    .map(|(&n, &p)| (n as f64 / kept as f64 - p).abs())
                    .sum::<f64>()
            })
            .collect()
    };
    Ok(OracleReport {
        tv_b: tv(&counts_b),
        tv_a: tv(&counts_a),
        exact,
        sweeps: cfg.sweeps,
        condition: cfg.condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{
        acceptance_probability, sample_sign, Component, ComponentSet, MixtureWeights,
    };
    use crate::probability::{mvn_logpdf, SpdMatrix};
    use crate::rng::RngStream;

    #[test]
    fn enumeration_normalizes() {
        let hyper = NwHyper::<f64>::defaults(2);
        let spec = SyntheticSpec { k: 2, d: 4, latent_dim: 2, hyper: hyper.clone(), seed: 3 };
        let inst = synthesize_inter_gmm(&spec).unwrap();
        let marg = enumerate_sign_marginals(&inst.z_a, &inst.z_b, &hyper, 2).unwrap();
        for m in &marg {
            let s: f64 = m.iter().sum();
            assert!((s - 1.0).abs() < 1e-10, "marginal sum {s}");
        }
    }

    #[test]
    fn enumeration_symmetric_for_single_datum() {
        // One datum: marginal must be uniform regardless of z (any single
        // point is equally well explained by either empty-prior component).
        let hyper = NwHyper::<f64>::defaults(2);
        let z_a = vec![vec![0.7, -0.3]];
        let z_b = vec![vec![-0.2, 0.5]];
        let marg = enumerate_sign_marginals(&z_a, &z_b, &hyper, 2).unwrap();
        assert!((marg[0][0] - 0.5).abs() < 1e-12);
        assert!((marg[0][1] - 0.5).abs() < 1e-12);
    }

    /// Detailed-balance occupancy check with fixed components: the two-state
    /// chain induced by alternating MH communication must match the exact
    /// two-point conditional posterior.
    #[test]
    fn detailed_balance_fixed_phi() {
        let phi_a = ComponentSet::new(vec![
            Component { mu: vec![-1.0, 0.0], lambda: SpdMatrix::identity(2) },
            Component { mu: vec![1.0, 0.2], lambda: SpdMatrix::scaled_identity(2, 1.4) },
        ])
        .unwrap();
        let phi_b = ComponentSet::new(vec![
            Component { mu: vec![-0.8, 0.1], lambda: SpdMatrix::scaled_identity(2, 0.8) },
            Component { mu: vec![1.2, -0.1], lambda: SpdMatrix::identity(2) },
        ])
        .unwrap();
        let z_a = vec![0.3, 0.1];
        let z_b = vec![-0.1, 0.2];
        let pi = MixtureWeights::uniform(2);

        // Exact conditional posterior over the shared sign.
        let mut logp = [0.0f64; 2];
        for k in 0..2 {
            let ca = phi_a.component(k).unwrap();
            let cb = phi_b.component(k).unwrap();
            logp[k] = mvn_logpdf(&z_a, &ca.mu, &ca.lambda).unwrap()
                + mvn_logpdf(&z_b, &cb.mu, &cb.lambda).unwrap();
        }
        let lse = crate::probability::log_sum_exp(&logp);
        let exact: Vec<f64> = logp.iter().map(|l| (l - lse).exp()).collect();

        // Alternating MH communication on (w_a, w_b), both starting at 0.
        let mut rng = RngStream::new(77);
        let mut w_a = 0usize;
        let mut w_b = 0usize;
        let steps = 100_000;
        let mut occupancy_b = [0usize; 2];
        let mut occupancy_a = [0usize; 2];
        for _ in 0..steps {
            // A speaks to B
            let prop = sample_sign(&z_a, &phi_a, &pi, &mut rng).unwrap();
            let r = acceptance_probability(&z_b, &phi_b, prop, w_b).unwrap();
            if rng.uniform::<f64>() <= r {
                w_b = prop;
            }
            // B speaks to A
            let prop = sample_sign(&z_b, &phi_b, &pi, &mut rng).unwrap();
            let r = acceptance_probability(&z_a, &phi_a, prop, w_a).unwrap();
            if rng.uniform::<f64>() <= r {
                w_a = prop;
            }
            occupancy_b[w_b] += 1;
            occupancy_a[w_a] += 1;
        }
        for (occ, name) in [(occupancy_b, "B"), (occupancy_a, "A")] {
            let tv = 0.5
                * (0..2)
                    .map(|k| (occ[k] as f64 / steps as f64 - exact[k]).abs())
                    .sum::<f64>();
            assert!(tv < 0.02, "agent {name} TV {tv} (exact {exact:?})");
        }
    }

    #[test]
    fn posterior_agreement_small_run() {
        // Reduced sweep count for the unit suite; the acceptance test runs
        // the full 200k.
        let mut cfg = OracleConfig::<f64>::reference(21, Condition::Mh);
        cfg.d = 4;
        cfg.sweeps = 30_000;
        cfg.burn_in = 2_000;
        let report = posterior_agreement_suite(&cfg).unwrap();
        assert!(
            report.max_tv_b() < 0.08,
            "tv_b {:?} exact {:?}",
            report.tv_b,
            report.exact
        );
        assert!(report.max_tv_a() < 0.08, "tv_a {:?}", report.tv_a);
    }
}
