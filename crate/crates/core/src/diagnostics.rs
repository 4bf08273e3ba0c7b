//! Finite-difference checks of every tape operation and of each trainable
//! block of the model, evaluated at random points.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{build_episode, Episode};
use crate::encoder::{
    encode_on_tape, reconstruction_loss, step_name, Activation, AggregatorKind, BoundEncoder, EncoderConfig,
    GnnParams, NodeInputs, FINAL_W,
};
use crate::error::Result;
use crate::evalrec::relevance_on_tape;
use crate::ground_truth::{bpr_loss_var, EmbeddingTable};
use crate::meta_learner::{MetaLearner, MetaLearnerConfig, WK, WQ, WV};
use crate::numerics::gradcheck::grad_check_detailed;
use crate::numerics::rng::{self, Rng};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;
use crate::sampler::{b_name, log_prob_on_tape, state_features, w1_name, w2_name, SamplerConfig, SamplerParams, Step};
use crate::synthetic::{generate, PlantedConfig};

/// Central-difference step.
pub const EPS: f64 = 1e-6;
/// Largest acceptable relative error between tape and finite differences.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub name: String,
    pub points: usize,
    pub max_rel_error: f64,
}

type Objective = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

/// A check instance: the function of `x` and the point to check it at.
struct Case {
    f: Objective,
    x: Tensor,
}

fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Gaussian entries pushed at least 0.05 away from zero, so that no
/// piecewise-linear kink falls inside the difference stencil.
fn point(shape: &[usize], r: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = normal(r);
            v.signum() * (v.abs() + 0.05)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("valid shape")
}

/// Scalarise an output by a fixed random projection.
fn project(tape: &mut Tape, v: Var, c: &Tensor) -> Result<Var> {
    let c = tape.constant(c);
    tape.dot(v, c)
}

fn op_cases(r: &mut Rng) -> Vec<(&'static str, Case)> {
    let d = 5;
    let v = |r: &mut Rng| point(&[d], r);
    let mut out: Vec<(&'static str, Case)> = Vec::new();
    macro_rules! unary {
        ($name:expr, $op:ident) => {{
            let c = v(r);
            out.push((
                $name,
                Case {
                    f: Box::new(move |t, x| {
                        let y = t.$op(x)?;
                        project(t, y, &c)
                    }),
                    x: v(r),
                },
            ));
        }};
    }
    unary!("op.relu", relu);
    unary!("op.sigmoid", sigmoid);
    unary!("op.tanh", tanh);
    unary!("op.log_sigmoid", log_sigmoid);
    unary!("op.softmax", softmax);
    {
        let c = v(r);
        out.push((
            "op.leaky_relu",
            Case {
                f: Box::new(move |t, x| {
                    let y = t.leaky_relu(x, 0.2)?;
                    project(t, y, &c)
                }),
                x: v(r),
            },
        ));
    }
    {
        let c = v(r);
        out.push((
            "op.affine",
            Case {
                f: Box::new(move |t, x| {
                    let y = t.affine(x, -1.7, 0.3)?;
                    project(t, y, &c)
                }),
                x: v(r),
            },
        ));
    }
    for (name, which) in [("op.add", 0), ("op.sub", 1), ("op.mul", 2)] {
        let (b, c) = (v(r), v(r));
        out.push((
            name,
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b);
                    let y = match which {
                        0 => t.add(x, b)?,
                        1 => t.sub(b, x)?,
                        _ => t.mul(x, x)?,
                    };
                    let y = t.mul(y, b)?;
                    project(t, y, &c)
                }),
                x: v(r),
            },
        ));
    }
    {
        let (xv, c) = (v(r), point(&[3], r));
        out.push((
            "op.matvec.w",
            Case {
                f: Box::new(move |t, x| {
                    let xv = t.constant(&xv);
                    let y = t.matvec(x, xv)?;
                    project(t, y, &c)
                }),
                x: point(&[3, d], r),
            },
        ));
        let (w, c2) = (point(&[3, d], r), point(&[3], r));
        out.push((
            "op.matvec.x",
            Case {
                f: Box::new(move |t, x| {
                    let w = t.constant(&w);
                    let y = t.matvec(w, x)?;
                    project(t, y, &c2)
                }),
                x: v(r),
            },
        ));
    }
    {
        let (b, c) = (point(&[d, 2], r), point(&[3, 2], r));
        out.push((
            "op.matmul",
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b);
                    let y = t.matmul(x, b)?;
                    let y2 = t.matmul(x, b)?;
                    let y = t.mul(y, y2)?;
                    project(t, y, &c)
                }),
                x: point(&[3, d], r),
            },
        ));
    }
    {
        let (b, c) = (point(&[2], r), point(&[d + 2], r));
        out.push((
            "op.concat",
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b);
                    let y = t.concat(&[b, x])?;
                    let y = t.sigmoid(y)?;
                    project(t, y, &c)
                }),
                x: v(r),
            },
        ));
    }
    for (name, which) in [("op.mean", 0), ("op.add_n", 1), ("op.stack", 2)] {
        let (b, c, cm) = (v(r), v(r), point(&[3, d], r));
        out.push((
            name,
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b);
                    let x2 = t.mul(x, x)?;
                    match which {
                        0 => {
                            let y = t.mean(&[x, b, x2])?;
                            project(t, y, &c)
                        }
                        1 => {
                            let y = t.add_n(&[x, b, x2])?;
                            project(t, y, &c)
                        }
                        _ => {
                            let y = t.stack(&[x, b, x2])?;
                            project(t, y, &cm)
                        }
                    }
                }),
                x: v(r),
            },
        ));
    }
    {
        let (xs, c) = ((0..3).map(|_| v(r)).collect::<Vec<_>>(), v(r));
        out.push((
            "op.weighted_sum.weights",
            Case {
                f: Box::new(move |t, w| {
                    let xs: Vec<Var> = xs.iter().map(|x| t.constant(x)).collect();
                    let y = t.weighted_sum(w, &xs)?;
                    project(t, y, &c)
                }),
                x: point(&[3], r),
            },
        ));
        let (w, b, c2) = (point(&[2], r), v(r), v(r));
        out.push((
            "op.weighted_sum.inputs",
            Case {
                f: Box::new(move |t, x| {
                    let w = t.constant(&w);
                    let b = t.constant(&b);
                    let y = t.weighted_sum(w, &[x, b])?;
                    let y = t.mul(y, x)?;
                    project(t, y, &c2)
                }),
                x: v(r),
            },
        ));
    }
    {
        let c = v(r);
        out.push((
            "op.mean_rows",
            Case {
                f: Box::new(move |t, x| {
                    let x2 = t.mul(x, x)?;
                    let y = t.mean_rows(x2)?;
                    project(t, y, &c)
                }),
                x: point(&[4, d], r),
            },
        ));
    }
    for (name, which) in [("op.attention.q", 0), ("op.attention.k", 1), ("op.attention.v", 2)] {
        let (a, b, c) = (point(&[4, 6], r), point(&[4, 6], r), point(&[4, 6], r));
        out.push((
            name,
            Case {
                f: Box::new(move |t, x| {
                    let (a, b) = (t.constant(&a), t.constant(&b));
                    let y = match which {
                        0 => t.scaled_dot_attention(x, a, b, 2)?,
                        1 => t.scaled_dot_attention(a, x, b, 2)?,
                        _ => t.scaled_dot_attention(a, b, x, 2)?,
                    };
                    project(t, y, &c)
                }),
                x: point(&[4, 6], r),
            },
        ));
    }
    {
        let b = v(r);
        out.push((
            "op.dot",
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b);
                    let y = t.mul(x, b)?;
                    t.dot(y, x)
                }),
                x: v(r),
            },
        ));
        let b2 = v(r);
        out.push((
            "op.cosine",
            Case {
                f: Box::new(move |t, x| {
                    let b = t.constant(&b2);
                    t.cosine(x, b)
                }),
                x: v(r),
            },
        ));
        let c = v(r);
        out.push((
            "op.sum",
            Case {
                f: Box::new(move |t, x| {
                    let y = t.mul(x, x)?;
                    let c = t.constant(&c);
                    let y = t.mul(y, c)?;
                    t.sum(y)
                }),
                x: v(r),
            },
        ));
    }
    out
}

/// Small planted world shared by the model-level checks.
struct World {
    graph: crate::dataio::InteractionGraph,
    init: EmbeddingTable,
    truth: EmbeddingTable,
}

fn world(dim: usize, seed: u64) -> Result<World> {
    let p = generate(&PlantedConfig {
        users: 24,
        items: 24,
        dim,
        min_degree: 4,
        max_degree: 7,
        seed,
        ..Default::default()
    })?;
    Ok(World {
        graph: p.graph,
        init: p.init,
        truth: p.truth,
    })
}

/// Reconstruction loss of one episode with the parameter `name` of the
/// encoder (`f:` prefix) or the meta learner (`g:` prefix) replaced by the
/// checked variable.
fn encoder_case(
    w: std::rc::Rc<World>,
    episode: Episode,
    params: GnnParams,
    meta: Option<MetaLearner>,
    name: String,
) -> Case {
    let x = match name.split_once(':') {
        Some(("g", n)) => meta.as_ref().expect("meta learner").params.tensor(n).clone(),
        Some((_, n)) => params.params.tensor(n).clone(),
        None => unreachable!("prefixed name"),
    };
    Case {
        f: Box::new(move |t, x| {
            let mut enc = BoundEncoder::new(t, &params, false, meta.as_ref().map(|m| (m, false)));
            match name.split_once(':') {
                Some(("g", n)) => enc.meta.as_mut().expect("meta bound").1.set(n, x),
                Some((_, n)) => enc.bound.set(n, x),
                None => unreachable!(),
            }
            let mut inputs = NodeInputs::new(&w.init, false);
            let h = encode_on_tape(t, &enc, &episode, &w.graph, &mut inputs)?;
            let truth = t.constant_vec(w.truth.row(episode.target));
            reconstruction_loss(t, h, truth)
        }),
        x,
    }
}

fn model_cases(point_seed: u64) -> Result<Vec<(String, Case)>> {
    let d = 4;
    let layers = 3;
    let w = std::rc::Rc::new(world(d, point_seed)?);
    let mut r = rng::stream(point_seed, &[0x9c]);
    let users: Vec<_> = w.graph.users().collect();
    let target = users[r.gen_range(0..users.len())];
    let episode = build_episode(&w.graph, target, 2, layers, point_seed)?;
    let mut out: Vec<(String, Case)> = Vec::new();

    let configs = [
        ("mean", AggregatorKind::Mean, Activation::Sigmoid),
        ("attention", AggregatorKind::Attention, Activation::Tanh),
        ("lightgcn", AggregatorKind::LightGcn, Activation::Sigmoid),
    ];
    for (tag, aggregator, activation) in configs {
        for use_meta in [false, true] {
            let cfg = EncoderConfig {
                dim: d,
                layers,
                aggregator,
                activation,
                use_meta,
            };
            let params = GnnParams::new(cfg, rng::derive_seed(point_seed, &[use_meta as u64]))?;
            let meta = use_meta
                .then(|| MetaLearner::new(MetaLearnerConfig { dim: d, heads: 2 }, point_seed))
                .transpose()?;
            let kind = if use_meta { "meta_conv" } else { "conv" };
            let mut names: Vec<(String, String)> = (1..layers)
                .map(|s| (format!("{kind}.{tag}.{}", step_name(s)), format!("f:{}", step_name(s))))
                .collect();
            names.push((format!("{kind}.{tag}.{FINAL_W}"), format!("f:{FINAL_W}")));
            for n in params.params.names().filter(|n| n.ends_with(".att")) {
                names.push((format!("{kind}.{tag}.{n}"), format!("f:{n}")));
            }
            if use_meta && aggregator == AggregatorKind::Mean {
                for n in [WQ, WK, WV] {
                    names.push((format!("meta_agg.mean.g.{n}"), format!("g:{n}")));
                }
            }
            for (label, name) in names {
                out.push((label, encoder_case(w.clone(), episode.clone(), params.clone(), meta.clone(), name)));
            }
        }
    }

    // meta learner objective: 1 − cos(h̃, h) over first-order inputs
    let learner = MetaLearner::new(MetaLearnerConfig { dim: d, heads: 2 }, point_seed)?;
    for n in [WQ, WK, WV] {
        let learner = learner.clone();
        let w = w.clone();
        let first = episode.first_hop();
        out.push((
            format!("meta_learner.{n}"),
            Case {
                x: learner.params.tensor(n).clone(),
                f: Box::new(move |t, x| {
                    let mut b = learner.params.bind(t, false);
                    b.set(n, x);
                    let xs: Vec<Var> = first.iter().map(|&v| t.constant_vec(w.init.row(v))).collect();
                    let h = learner.embed_on_tape(t, &b, &xs)?;
                    let truth = t.constant_vec(w.truth.row(target));
                    reconstruction_loss(t, h, truth)
                }),
            },
        ));
    }

    // policy log-probability of a recorded action
    let mut sampler = SamplerParams::new(SamplerConfig { hidden: 6, ..SamplerConfig::new(d, 2) }, point_seed);
    for (_, t) in sampler.params.iter_mut() {
        *t = point(t.shape(), &mut r);
    }
    let cand = episode.hops[1][0].id;
    let sel: Vec<&[f64]> = episode.hops[0].iter().map(|n| w.init.row(n.id)).collect();
    let state = state_features(w.init.row(target), w.init.row(cand), &sel, 8);
    for action in [true, false] {
        for n in [w1_name(2), b_name(2), w2_name(2)] {
            let sampler = sampler.clone();
            let step = Step {
                order: 2,
                state: state.clone(),
                action,
                log_prob: 0.0,
            };
            let label = format!("policy.log_prob.{}.{n}", if action { "keep" } else { "drop" });
            out.push((
                label,
                Case {
                    x: sampler.params.tensor(&n).clone(),
                    f: Box::new(move |t, x| {
                        let mut b = sampler.params.bind(t, false);
                        b.set(n.clone(), x);
                        log_prob_on_tape(t, &b, &step)
                    }),
                },
            ));
        }
    }

    // BPR with a dot-product score and L2 term, w.r.t. each embedding
    let (eu, ei, ej) = (point(&[d], &mut r), point(&[d], &mut r), point(&[d], &mut r));
    for (n, which) in [("bpr.user", 0), ("bpr.pos", 1), ("bpr.neg", 2)] {
        let (eu, ei, ej) = (eu.clone(), ei.clone(), ej.clone());
        let x = [&eu, &ei, &ej][which].clone();
        out.push((
            n.to_string(),
            Case {
                x,
                f: Box::new(move |t, x| {
                    let mut vs = [t.constant(&eu), t.constant(&ei), t.constant(&ej)];
                    vs[which] = x;
                    let yp = t.dot(vs[0], vs[1])?;
                    let yn = t.dot(vs[0], vs[2])?;
                    let norms: Vec<Var> = vs.iter().map(|&v| t.dot(v, v)).collect::<Result<_>>()?;
                    let n = t.add_n(&norms)?;
                    bpr_loss_var(t, yp, yn, 0.01, Some(n))
                }),
            },
        ));
    }
    // BPR through the recommender head
    {
        let (eu, ei, ej) = (eu.clone(), ei.clone(), ej.clone());
        out.push((
            "bpr.head".to_string(),
            Case {
                x: point(&[d, d], &mut r),
                f: Box::new(move |t, w| {
                    let (u, i, j) = (t.constant(&eu), t.constant(&ei), t.constant(&ej));
                    let yp = relevance_on_tape(t, u, i, w)?;
                    let yn = relevance_on_tape(t, u, j, w)?;
                    bpr_loss_var(t, yp, yn, 0.0, None)
                }),
            },
        ));
    }
    Ok(out)
}

/// Run every check at `points` random points and report the worst relative
/// error per check, in a stable order.
pub fn gradient_suite(points: usize, seed: u64) -> Result<Vec<GradReport>> {
    let mut reports: Vec<GradReport> = Vec::new();
    let mut record = |name: &str, err: f64| match reports.iter_mut().find(|r| r.name == name) {
        Some(r) => {
            r.points += 1;
            r.max_rel_error = r.max_rel_error.max(err);
        }
        None => reports.push(GradReport {
            name: name.to_string(),
            points: 1,
            max_rel_error: err,
        }),
    };
    for p in 0..points {
        let ps = rng::derive_seed(seed, &[0x96ad, p as u64]);
        let mut r = rng::stream(ps, &[]);
        for (name, case) in op_cases(&mut r) {
            record(name, grad_check_detailed(&case.f, &case.x, EPS)?.max_rel_error);
        }
        for (name, case) in model_cases(ps)? {
            record(&name, grad_check_detailed(&case.f, &case.x, EPS)?.max_rel_error);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_every_block() {
        let names: Vec<String> = gradient_suite(1, 0).unwrap().into_iter().map(|r| r.name).collect();
        for want in [
            "op.attention.q",
            "conv.mean.step1.w",
            "meta_conv.attention.step2.att",
            "meta_agg.mean.g.wq",
            "meta_learner.wv",
            "policy.log_prob.drop.o2.w1",
            "bpr.head",
        ] {
            assert!(names.iter().any(|n| n == want), "missing {want}");
        }
    }
}
