use serde::{Deserialize, Serialize};

use super::policy::{QTable, SoftPolicy};
use crate::envs::TabularMdp;
use crate::error::{Error, Result};
use crate::numerics::{solve_linear, Matrix, Rng};

fn check_shapes(mdp: &TabularMdp, pi: &SoftPolicy) -> Result<()> {
    if pi.n_states() != mdp.n_states() {
        return Err(Error::Shape {
            expected: mdp.n_states(),
            got: pi.n_states(),
        });
    }
    if pi.n_actions() != mdp.n_actions() {
        return Err(Error::Shape {
            expected: mdp.n_actions(),
            got: pi.n_actions(),
        });
    }
    Ok(())
}

/// `Q'(s,a) = r(s,a) + γ(s) Σ_{s'} P(s'|s,a) V(s')` with the soft value of `q`.
pub fn soft_backup(mdp: &TabularMdp, pi: &SoftPolicy, q: &QTable) -> Result<QTable> {
    check_shapes(mdp, pi)?;
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::Shape {
            expected: mdp.n_states() * mdp.n_actions(),
            got: q.values().len(),
        });
    }
    let v = q.soft_values(pi);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp.next_dist(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            out.push(mdp.reward(s, a) + mdp.gamma(s) * ev);
        }
    }
    QTable::new(ns, na, out)
}

/// How the policy-evaluation linear system is assembled. All three give the
/// same `Q^π`; having them side by side is a consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalAssembly {
    /// Entropy bonus of the successor folded into the reward:
    /// `r^γ(s,a) = r(s,a) + γ(s) E_{s'}[α H(π(·|s'))]`, then
    /// `Q = (I - Γ P_π)^{-1} r^γ`.
    EntropyReward,
    /// Solve for `Q̃ = Q - α log π` with reward `r - α log π`, then shift back.
    LogPolicyShift,
    /// Solve the `S`-dimensional system for `V`, then `Q = r + Γ P V`.
    StateValue,
}

/// Exact soft action values of `pi` by a dense linear solve.
pub fn exact_soft_eval(mdp: &TabularMdp, pi: &SoftPolicy) -> Result<QTable> {
    exact_soft_eval_with(mdp, pi, EvalAssembly::EntropyReward)
}

pub fn exact_soft_eval_with(mdp: &TabularMdp, pi: &SoftPolicy, assembly: EvalAssembly) -> Result<QTable> {
    check_shapes(mdp, pi)?;
    if mdp.beta() >= 1.0 {
        return Err(Error::InvalidRange {
            name: "beta",
            reason: "max discount must be < 1".into(),
        });
    }
    match assembly {
        EvalAssembly::EntropyReward => {
            let entropy: Vec<f64> = (0..mdp.n_states()).map(|s| pi.alpha * pi.entropy(s)).collect();
            let rhs = sa_rewards(mdp, |s, a| {
                mdp.reward(s, a) + mdp.gamma(s) * dot(mdp.next_dist(s, a), &entropy)
            });
            QTable::new(
                mdp.n_states(),
                mdp.n_actions(),
                solve_linear(&sa_system(mdp, pi), &rhs)?,
            )
        }
        EvalAssembly::LogPolicyShift => {
            let rhs = sa_rewards(mdp, |s, a| mdp.reward(s, a) - pi.alpha * pi.log_prob(s, a));
            let mut q = solve_linear(&sa_system(mdp, pi), &rhs)?;
            let na = mdp.n_actions();
            for (i, v) in q.iter_mut().enumerate() {
                *v += pi.alpha * pi.log_prob(i / na, i % na);
            }
            QTable::new(mdp.n_states(), na, q)
        }
        EvalAssembly::StateValue => {
            let (ns, na) = (mdp.n_states(), mdp.n_actions());
            let mut m = Matrix::identity(ns);
            let mut rhs = vec![0.0; ns];
            for s in 0..ns {
                for a in 0..na {
                    let p = pi.prob(s, a);
                    rhs[s] += p * (mdp.reward(s, a) - pi.alpha * pi.log_prob(s, a));
                    for (s2, t) in mdp.next_dist(s, a).iter().enumerate() {
                        m.row_mut(s)[s2] -= mdp.gamma(s) * p * t;
                    }
                }
            }
            let v = solve_linear(&m, &rhs)?;
            let q = sa_rewards(mdp, |s, a| {
                mdp.reward(s, a) + mdp.gamma(s) * dot(mdp.next_dist(s, a), &v)
            });
            QTable::new(ns, na, q)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sa_rewards(mdp: &TabularMdp, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push(f(s, a));
        }
    }
    out
}

/// `I - Γ P_π` over `(s,a)` rows, `P_π[(s,a),(s',a')] = P(s'|s,a) π(a'|s')`.
fn sa_system(mdp: &TabularMdp, pi: &SoftPolicy) -> Matrix {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n = ns * na;
    let mut m = Matrix::identity(n);
    for s in 0..ns {
        let g = mdp.gamma(s);
        for a in 0..na {
            let row = m.row_mut(s * na + a);
            for (s2, t) in mdp.next_dist(s, a).iter().enumerate() {
                if *t == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    row[s2 * na + a2] -= g * t * pi.prob(s2, a2);
                }
            }
        }
    }
    m
}

/// Result of repeated backups from a starting table.
#[derive(Debug, Clone)]
pub struct BackupIteration {
    pub q: QTable,
    pub iterations: usize,
    /// `||Q_{k+1} - Q_k||_∞` per iteration.
    pub deltas: Vec<f64>,
}

/// Apply [`soft_backup`] until the a-posteriori error bound
/// `β/(1-β) ||Q_{k+1} - Q_k||_∞` drops below `tol` or `max_iters` is hit.
pub fn iterate_soft_backup(
    mdp: &TabularMdp,
    pi: &SoftPolicy,
    start: QTable,
    tol: f64,
    max_iters: usize,
) -> Result<BackupIteration> {
    let beta = mdp.beta();
    let factor = if beta > 0.0 { beta / (1.0 - beta) } else { 0.0 };
    let mut q = start;
    let mut deltas = Vec::new();
    for k in 1..=max_iters {
        let next = soft_backup(mdp, pi, &q)?;
        let d = next.sup_dist(&q);
        deltas.push(d);
        q = next;
        if factor * d < tol {
            return Ok(BackupIteration {
                q,
                iterations: k,
                deltas,
            });
        }
    }
    Ok(BackupIteration {
        q,
        iterations: max_iters,
        deltas,
    })
}

/// Largest observed `||T Q1 - T Q2||_∞ / ||Q1 - Q2||_∞` over `trials` random
/// pairs. Identical pairs are redrawn.
pub fn contraction_certificate(mdp: &TabularMdp, pi: &SoftPolicy, trials: usize, rng: &mut Rng) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidRange {
            name: "trials",
            reason: "need at least one Q pair".into(),
        });
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < trials {
        let scale = 10f64.powf(rng.uniform_range(-1.0, 2.0));
        let q1: Vec<f64> = (0..ns * na).map(|_| scale * rng.normal()).collect();
        let mut q2 = q1.clone();
        if rng.uniform() < 0.25 {
            // single-entry perturbation probes one column of the operator
            let i = rng.below(ns * na);
            q2[i] += scale * rng.normal();
        } else {
            q2.iter_mut().for_each(|v| *v += scale * rng.normal());
        }
        let q1 = QTable::new(ns, na, q1)?;
        let q2 = QTable::new(ns, na, q2)?;
        let gap = q1.sup_dist(&q2);
        if gap == 0.0 {
            continue;
        }
        let out = soft_backup(mdp, pi, &q1)?.sup_dist(&soft_backup(mdp, pi, &q2)?);
        worst = worst.max(out / gap);
        done += 1;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;

    fn instance(seed: u64, s: usize, a: usize) -> (TabularMdp, SoftPolicy) {
        let mut rng = Rng::new(seed);
        let mdp = random_mdp(s, a, 0.3, (-1.0, 1.0), (0.0, 0.95), &mut rng).unwrap();
        let pi = SoftPolicy::random(s, a, 1e-4, 0.3, &mut rng).unwrap();
        (mdp, pi)
    }

    #[test]
    fn zero_discount_backup_is_reward() {
        let (mdp, pi) = instance(1, 4, 3);
        let mdp = mdp.with_gammas(vec![0.0; 4]).unwrap();
        let mut rng = Rng::new(2);
        let q = QTable::new(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let out = soft_backup(&mdp, &pi, &q).unwrap();
        assert_eq!(out.values(), mdp.rewards());
        let exact = exact_soft_eval(&mdp, &pi).unwrap();
        assert!(exact
            .values()
            .iter()
            .zip(mdp.rewards())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn single_state_closed_form() {
        // near-deterministic two-action policy, one state
        let (r0, r1, g, alpha) = (1.0, -0.5, 0.9, 0.4);
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![r0, r1], vec![g]).unwrap();
        let eps = 1e-6;
        let pi = SoftPolicy::from_probs(1, 2, &[1.0 - eps, eps], alpha).unwrap();
        let h = -((1.0 - eps) * (1.0 - eps).ln() + eps * eps.ln());
        // V = Σ π r + α H + γ V
        let v = ((1.0 - eps) * r0 + eps * r1 + alpha * h) / (1.0 - g);
        let want = [r0 + g * v, r1 + g * v];
        for assembly in [
            EvalAssembly::EntropyReward,
            EvalAssembly::LogPolicyShift,
            EvalAssembly::StateValue,
        ] {
            let q = exact_soft_eval_with(&mdp, &pi, assembly).unwrap();
            assert!((q.get(0, 0) - want[0]).abs() < 1e-12);
            assert!((q.get(0, 1) - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_idempotent() {
        let (mdp, pi) = instance(5, 8, 3);
        let q = exact_soft_eval(&mdp, &pi).unwrap();
        let back = soft_backup(&mdp, &pi, &q).unwrap();
        assert!(back.sup_dist(&q) < 1e-9);
    }

    #[test]
    fn assemblies_agree() {
        for seed in 0..30 {
            let (mdp, pi) = instance(seed, 2 + seed as usize % 12, 1 + seed as usize % 5);
            let a = exact_soft_eval_with(&mdp, &pi, EvalAssembly::EntropyReward).unwrap();
            let b = exact_soft_eval_with(&mdp, &pi, EvalAssembly::LogPolicyShift).unwrap();
            let c = exact_soft_eval_with(&mdp, &pi, EvalAssembly::StateValue).unwrap();
            assert!(a.sup_dist(&b) < 1e-10, "seed {seed}: {}", a.sup_dist(&b));
            assert!(a.sup_dist(&c) < 1e-10, "seed {seed}: {}", a.sup_dist(&c));
        }
    }

    #[test]
    fn two_by_two_brute_force() {
        // hand-chosen numbers; oracle: 4x4 system solved by Cramer's rule
        let p = vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 1.0, 0.0];
        let r = vec![1.0, 0.0, -1.0, 2.0];
        let gam = vec![0.8, 0.6];
        let mdp = TabularMdp::new(2, 2, p.clone(), r.clone(), gam.clone()).unwrap();
        let probs = [0.6, 0.4, 0.25, 0.75];
        let alpha = 0.5;
        let pi = SoftPolicy::from_probs(2, 2, &probs, alpha).unwrap();
        let h: Vec<f64> = (0..2)
            .map(|s| {
                -(0..2)
                    .map(|a| probs[s * 2 + a] * f64::ln(probs[s * 2 + a]))
                    .sum::<f64>()
            })
            .collect();
        let mut m = [[0.0; 4]; 4];
        let mut b = [0.0; 4];
        for s in 0..2 {
            for a in 0..2 {
                let i = s * 2 + a;
                m[i][i] += 1.0;
                b[i] = r[i];
                for s2 in 0..2 {
                    let t = p[i * 2 + s2];
                    b[i] += gam[s] * t * alpha * h[s2];
                    for a2 in 0..2 {
                        m[i][s2 * 2 + a2] -= gam[s] * t * probs[s2 * 2 + a2];
                    }
                }
            }
        }
        let det4 = |m: &[[f64; 4]; 4]| -> f64 {
            let det3 = |a: [[f64; 3]; 3]| {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            };
            (0..4)
                .map(|c| {
                    let mut minor = [[0.0; 3]; 3];
                    for r in 1..4 {
                        let mut k = 0;
                        for cc in 0..4 {
                            if cc != c {
                                minor[r - 1][k] = m[r][cc];
                                k += 1;
                            }
                        }
                    }
                    let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[0][c] * det3(minor)
                })
                .sum()
        };
        let d = det4(&m);
        let q = exact_soft_eval(&mdp, &pi).unwrap();
        for i in 0..4 {
            let mut mi = m;
            for row in 0..4 {
                mi[row][i] = b[row];
            }
            let want = det4(&mi) / d;
            assert!((q.values()[i] - want).abs() < 1e-12, "{i}: {} vs {want}", q.values()[i]);
        }
    }

    #[test]
    fn iteration_matches_solve_and_is_geometric() {
        let (mdp, pi) = instance(9, 10, 4);
        let exact = exact_soft_eval(&mdp, &pi).unwrap();
        let it = iterate_soft_backup(&mdp, &pi, QTable::zeros(10, 4), 1e-11, 100_000).unwrap();
        assert!(it.q.sup_dist(&exact) < 1e-9);
        // error contracts by at least β per step
        let beta = mdp.beta();
        let mut q = QTable::zeros(10, 4);
        let mut err = q.sup_dist(&exact);
        for _ in 0..50 {
            q = soft_backup(&mdp, &pi, &q).unwrap();
            let next = q.sup_dist(&exact);
            assert!(next <= beta * err + 1e-12);
            err = next;
        }
    }

    #[test]
    fn constant_discount_modulus() {
        let (mdp, pi) = instance(11, 6, 3);
        let mdp = mdp.with_gammas(vec![0.7; 6]).unwrap();
        let m = contraction_certificate(&mdp, &pi, 200, &mut Rng::new(1)).unwrap();
        assert!(m <= 0.7 + 1e-12, "{m}");
        assert!(m > 0.0);
    }
}
