//! Score functions and their analytic partial derivatives.
//!
//! All three families are trilinear in (subject, relation, object), so the
//! score of an anchor against a candidate entity is always a plain dot
//! product between the candidate row and a coefficient vector derived from
//! the anchor and relation. The training backward pass leans on that
//! structure: per-candidate gradients share one coefficient vector, and
//! anchor/relation gradients only need the gradient-weighted candidate sum.

use super::{Family, Matrix, ModelError, ModelParams, ModelSpec, Real};
use crate::kg::{EntityId, RelationId, Triple};

/// Which end of the triple is being completed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Anchor is the subject; candidates complete the object slot.
    Object,
    /// Anchor is the object; candidates complete the subject slot.
    Subject,
}

/// Partial derivatives of one triple's score.
#[derive(Clone, Debug)]
pub struct ScoreGradients<F> {
    pub subject: Vec<F>,
    pub relation: Vec<F>,
    pub object: Vec<F>,
}

#[inline]
fn score_one<F: Real>(spec: &ModelSpec, s: &[F], r: &[F], o: &[F]) -> F {
    match spec.family {
        Family::DistMult => {
            // (s*o)*r keeps subject/object symmetry bit-exact.
            let mut acc = F::zero();
            for i in 0..spec.dim {
                acc = acc + (s[i] * o[i]) * r[i];
            }
            acc
        }
        Family::ComplEx => {
            let h = spec.half();
            let (sr, si) = s.split_at(h);
            let (rr, ri) = r.split_at(h);
            let (or, oi) = o.split_at(h);
            let mut acc = F::zero();
            for i in 0..h {
                acc = acc
                    + or[i] * (sr[i] * rr[i] - si[i] * ri[i])
                    + oi[i] * (sr[i] * ri[i] + si[i] * rr[i]);
            }
            acc
        }
        Family::SimplE => {
            let h = spec.half();
            let (hs, ts) = s.split_at(h);
            let (fwd, inv) = r.split_at(h);
            let (ho, to) = o.split_at(h);
            // Two role-symmetric partial sums; adding them commutes, so the
            // subject/object + forward/inverse swap is bit-exact.
            let mut fwd_part = F::zero();
            for i in 0..h {
                fwd_part = fwd_part + (hs[i] * fwd[i]) * to[i];
            }
            let mut inv_part = F::zero();
            for i in 0..h {
                inv_part = inv_part + (ho[i] * inv[i]) * ts[i];
            }
            F::from_f64(0.5) * (fwd_part + inv_part)
        }
    }
}

/// d score / d subject, as a function of (relation, object).
pub(crate) fn d_subject<F: Real>(spec: &ModelSpec, r: &[F], o: &[F], out: &mut [F]) {
    match spec.family {
        Family::DistMult => {
            for i in 0..spec.dim {
                out[i] = r[i] * o[i];
            }
        }
        Family::ComplEx => {
            let h = spec.half();
            let (rr, ri) = r.split_at(h);
            let (or, oi) = o.split_at(h);
            for i in 0..h {
                out[i] = rr[i] * or[i] + ri[i] * oi[i];
                out[h + i] = rr[i] * oi[i] - ri[i] * or[i];
            }
        }
        Family::SimplE => {
            let h = spec.half();
            let half = F::from_f64(0.5);
            let (fwd, inv) = r.split_at(h);
            let (ho, to) = o.split_at(h);
            for i in 0..h {
                out[i] = half * fwd[i] * to[i];
                out[h + i] = half * inv[i] * ho[i];
            }
        }
    }
}

/// d score / d relation, as a function of (subject, object).
pub(crate) fn d_relation<F: Real>(spec: &ModelSpec, s: &[F], o: &[F], out: &mut [F]) {
    match spec.family {
        Family::DistMult => {
            for i in 0..spec.dim {
                out[i] = s[i] * o[i];
            }
        }
        Family::ComplEx => {
            let h = spec.half();
            let (sr, si) = s.split_at(h);
            let (or, oi) = o.split_at(h);
            for i in 0..h {
                out[i] = sr[i] * or[i] + si[i] * oi[i];
                out[h + i] = sr[i] * oi[i] - si[i] * or[i];
            }
        }
        Family::SimplE => {
            let h = spec.half();
            let half = F::from_f64(0.5);
            let (hs, ts) = s.split_at(h);
            let (ho, to) = o.split_at(h);
            for i in 0..h {
                out[i] = half * hs[i] * to[i];
                out[h + i] = half * ho[i] * ts[i];
            }
        }
    }
}

/// d score / d object, as a function of (subject, relation).
pub(crate) fn d_object<F: Real>(spec: &ModelSpec, s: &[F], r: &[F], out: &mut [F]) {
    match spec.family {
        Family::DistMult => {
            for i in 0..spec.dim {
                out[i] = s[i] * r[i];
            }
        }
        Family::ComplEx => {
            let h = spec.half();
            let (sr, si) = s.split_at(h);
            let (rr, ri) = r.split_at(h);
            for i in 0..h {
                out[i] = sr[i] * rr[i] - si[i] * ri[i];
                out[h + i] = sr[i] * ri[i] + si[i] * rr[i];
            }
        }
        Family::SimplE => {
            let h = spec.half();
            let half = F::from_f64(0.5);
            let (hs, ts) = s.split_at(h);
            let (fwd, inv) = r.split_at(h);
            for i in 0..h {
                out[i] = half * inv[i] * ts[i];
                out[h + i] = half * hs[i] * fwd[i];
            }
        }
    }
}

/// Coefficient vector such that `score = coeff . candidate` for candidates
/// filling the open slot of the row.
pub(crate) fn candidate_coeff<F: Real>(
    spec: &ModelSpec,
    side: Side,
    anchor: &[F],
    relation: &[F],
    out: &mut [F],
) {
    match side {
        Side::Object => d_object(spec, anchor, relation, out),
        Side::Subject => d_subject(spec, relation, anchor, out),
    }
}

/// Gradients of a gradient-weighted candidate sum `w` with respect to the
/// row's anchor and relation vectors.
pub(crate) fn anchor_relation_grads<F: Real>(
    spec: &ModelSpec,
    side: Side,
    anchor: &[F],
    relation: &[F],
    weighted_cand_sum: &[F],
    anchor_out: &mut [F],
    relation_out: &mut [F],
) {
    match side {
        Side::Object => {
            d_subject(spec, relation, weighted_cand_sum, anchor_out);
            d_relation(spec, anchor, weighted_cand_sum, relation_out);
        }
        Side::Subject => {
            d_object(spec, weighted_cand_sum, relation, anchor_out);
            d_relation(spec, weighted_cand_sum, anchor, relation_out);
        }
    }
}

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for i in 0..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

fn check_finite<F: Real>(value: F, what: impl Fn() -> String) -> Result<F, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NumericalFault(what()))
    }
}

/// Scores a batch of triples.
pub fn score_triples<F: Real>(
    params: &ModelParams<F>,
    batch: &[Triple],
) -> Result<Vec<F>, ModelError> {
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        let s = params.entities.row(t.subject.idx());
        let r = params.relations.row(t.predicate.idx());
        let o = params.entities.row(t.object.idx());
        let score = score_one(&params.spec, s, r, o);
        out.push(check_finite(score, || format!("score of {t:?}"))?);
    }
    Ok(out)
}

/// Scores every entity as the completion of each `(anchor, relation)` row.
/// Row k / column j holds the score of the triple completed with entity j;
/// it agrees with [`score_triples`] on the same triple within 1e-12.
pub fn score_against_all<F: Real>(
    params: &ModelParams<F>,
    rows: &[(EntityId, RelationId)],
    side: Side,
) -> Result<Matrix<F>, ModelError> {
    let n = params.entity_count();
    let mut out = Matrix::zeros(rows.len(), n);
    let mut coeff = vec![F::zero(); params.spec.dim];
    for (k, &(anchor, rel)) in rows.iter().enumerate() {
        let a = params.entities.row(anchor.idx());
        let r = params.relations.row(rel.idx());
        candidate_coeff(&params.spec, side, a, r, &mut coeff);
        let row = out.row_mut(k);
        for j in 0..n {
            row[j] = dot(&coeff, params.entities.row(j));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NumericalFault(format!(
                "all-entity score row {k} candidate {j}"
            )));
        }
    }
    Ok(out)
}

/// Closed-form partials of one triple's score with respect to the subject,
/// relation and object embeddings.
pub fn score_gradients<F: Real>(
    params: &ModelParams<F>,
    t: Triple,
) -> Result<ScoreGradients<F>, ModelError> {
    let spec = &params.spec;
    let s = params.entities.row(t.subject.idx());
    let r = params.relations.row(t.predicate.idx());
    let o = params.entities.row(t.object.idx());
    let mut g = ScoreGradients {
        subject: vec![F::zero(); spec.dim],
        relation: vec![F::zero(); spec.dim],
        object: vec![F::zero(); spec.dim],
    };
    d_subject(spec, r, o, &mut g.subject);
    d_relation(spec, s, o, &mut g.relation);
    d_object(spec, s, r, &mut g.object);
    for v in g.subject.iter().chain(&g.relation).chain(&g.object) {
        if !v.is_finite() {
            return Err(ModelError::NumericalFault(format!("gradient of {t:?}")));
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, InitSpec};

    fn params_from(
        family: Family,
        dim: usize,
        entities: Vec<Vec<f64>>,
        relations: Vec<Vec<f64>>,
    ) -> ModelParams<f64> {
        let spec = ModelSpec::new(family, dim).unwrap();
        let n = entities.len();
        let m = relations.len();
        ModelParams {
            spec,
            entities: Matrix::from_vec(n, dim, entities.into_iter().flatten().collect()),
            relations: Matrix::from_vec(m, dim, relations.into_iter().flatten().collect()),
        }
    }

    fn random_params(
        family: Family,
        dim: usize,
        n: usize,
        m: usize,
        seed: u64,
    ) -> ModelParams<f64> {
        let spec = ModelSpec::new(family, dim).unwrap();
        let init = InitSpec::Normal { std: 1.0 };
        init_params(spec, n, m, &init, &init, seed, None).unwrap()
    }

    #[test]
    fn distmult_hand_trace() {
        let params = params_from(
            Family::DistMult,
            2,
            vec![vec![1.0, 2.0], vec![0.5, 1.0]],
            vec![vec![3.0, -1.0]],
        );
        let score = score_triples(&params, &[Triple::new(0, 0, 1)]).unwrap()[0];
        assert!((score - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn complex_hand_trace() {
        // s = 1 + 0i, r = 0 + 1i, o = 0 + 1i -> Re((1)(i)(-i)) = 1
        let params = params_from(
            Family::ComplEx,
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        );
        let score = score_triples(&params, &[Triple::new(0, 0, 1)]).unwrap()[0];
        assert!((score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn simple_all_ones() {
        let params = params_from(
            Family::SimplE,
            2,
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![1.0, 1.0]],
        );
        let score = score_triples(&params, &[Triple::new(0, 0, 1)]).unwrap()[0];
        assert!((score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distmult_gradient_hand_trace() {
        let params = params_from(
            Family::DistMult,
            2,
            vec![vec![1.0, 2.0], vec![0.5, 1.0]],
            vec![vec![3.0, -1.0]],
        );
        let g = score_gradients(&params, Triple::new(0, 0, 1)).unwrap();
        assert_eq!(g.subject, vec![1.5, -1.0]);
        assert_eq!(g.relation, vec![0.5, 2.0]);
        assert_eq!(g.object, vec![3.0, -2.0]);
    }

    #[test]
    fn complex_gradient_hand_trace() {
        let params = params_from(
            Family::ComplEx,
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        );
        let g = score_gradients(&params, Triple::new(0, 0, 1)).unwrap();
        // d/dRe(s) = Re(r * conj(o)) = 1
        assert!((g.subject[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for family in [Family::DistMult, Family::ComplEx, Family::SimplE] {
            let mut params = random_params(family, 8, 4, 2, 99);
            let t = Triple::new(0, 1, 2);
            let g = score_gradients(&params, t).unwrap();
            for (kind, row_id, analytic) in [
                ("subject", 0usize, &g.subject),
                ("relation", 1, &g.relation),
                ("object", 2, &g.object),
            ] {
                for i in 0..8 {
                    let nudge = |params: &mut ModelParams<f64>, delta: f64| {
                        if kind == "relation" {
                            params.relations.row_mut(row_id)[i] += delta;
                        } else {
                            params.entities.row_mut(row_id)[i] += delta;
                        }
                    };
                    nudge(&mut params, h);
                    let up = score_triples(&params, &[t]).unwrap()[0];
                    nudge(&mut params, -2.0 * h);
                    let down = score_triples(&params, &[t]).unwrap()[0];
                    nudge(&mut params, h);
                    let fd = (up - down) / (2.0 * h);
                    assert!(
                        (fd - analytic[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "{family} {kind}[{i}]: fd={fd} analytic={}",
                        analytic[i]
                    );
                }
            }
        }
    }

    #[test]
    fn all_scores_match_per_triple_oracle() {
        for family in [Family::DistMult, Family::ComplEx, Family::SimplE] {
            let params = random_params(family, 8, 20, 3, 1234);
            for side in [Side::Object, Side::Subject] {
                let rows = [(EntityId(3), RelationId(1)), (EntityId(7), RelationId(2))];
                let m = score_against_all(&params, &rows, side).unwrap();
                for (k, &(anchor, rel)) in rows.iter().enumerate() {
                    for j in 0..20u32 {
                        let t = match side {
                            Side::Object => Triple {
                                subject: anchor,
                                predicate: rel,
                                object: EntityId(j),
                            },
                            Side::Subject => Triple {
                                subject: EntityId(j),
                                predicate: rel,
                                object: anchor,
                            },
                        };
                        let direct = score_triples(&params, &[t]).unwrap()[0];
                        assert!(
                            (m.row(k)[j as usize] - direct).abs() < 1e-12,
                            "{family} side={side:?} row={k} cand={j}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_relation_annihilates_distmult() {
        let params = params_from(
            Family::DistMult,
            2,
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![0.0, 0.0]],
        );
        let m = score_against_all(&params, &[(EntityId(0), RelationId(0))], Side::Object).unwrap();
        assert!(m.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distmult_symmetry_exact() {
        let params = random_params(Family::DistMult, 16, 10, 4, 5);
        for seed in 0..200u32 {
            let (s, p, o) = (seed % 10, (seed / 10) % 4, (seed / 40) % 10);
            let a = score_triples(&params, &[Triple::new(s, p, o)]).unwrap()[0];
            let b = score_triples(&params, &[Triple::new(o, p, s)]).unwrap()[0];
            assert_eq!(a, b);
        }
    }

    #[test]
    fn simple_swap_exact() {
        let params = random_params(Family::SimplE, 16, 10, 4, 6);
        let half = 8;
        let mut swapped = params.clone();
        for m in 0..4 {
            let row = params.relations.row(m).to_vec();
            let dst = swapped.relations.row_mut(m);
            dst[..half].copy_from_slice(&row[half..]);
            dst[half..].copy_from_slice(&row[..half]);
        }
        for seed in 0..200u32 {
            let (s, p, o) = (seed % 10, (seed / 10) % 4, (seed / 40) % 10);
            let a = score_triples(&params, &[Triple::new(s, p, o)]).unwrap()[0];
            let b = score_triples(&swapped, &[Triple::new(o, p, s)]).unwrap()[0];
            assert_eq!(a, b);
        }
    }

    #[test]
    fn subject_scale_bilinearity() {
        for family in [Family::DistMult, Family::ComplEx, Family::SimplE] {
            let params = random_params(family, 8, 6, 2, 7);
            let mut scaled = params.clone();
            for v in scaled.entities.row_mut(2) {
                *v *= 3.0;
            }
            let t = Triple::new(2, 1, 4);
            let a = score_triples(&params, &[t]).unwrap()[0];
            let b = score_triples(&scaled, &[t]).unwrap()[0];
            assert!((b - 3.0 * a).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn non_finite_parameter_detected() {
        let mut params = random_params(Family::DistMult, 4, 3, 1, 8);
        params.entities.row_mut(1)[0] = f64::NAN;
        let err = score_triples(&params, &[Triple::new(1, 0, 2)]).unwrap_err();
        assert!(matches!(err, ModelError::NumericalFault(_)));
    }
}
