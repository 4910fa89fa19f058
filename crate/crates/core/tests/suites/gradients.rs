//! Central-difference checks of analytic gradients for every training loss
//! and for the parameters of each network.

use encryptgan::autograd::{Graph, Var};
use encryptgan::imagedata::{CompositeImage, DomainLabel, Image, Placement};
use encryptgan::losses::{
    cycle_loss, graph as lg, information_loss, key_matching_loss, keygen_classification_loss,
    lsgan_discriminator_loss, lsgan_generator_loss, Activations,
};
use encryptgan::networks::{ArchConfig, FeatureTaps, Networks, ParamSet, ScoreMap};
use encryptgan::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f32 = 1e-3;
const REL_TOL: f64 = 1e-2;
const SUBSET: usize = 10;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// How many largest-gradient candidates may be screened before giving up.
const CANDIDATES: usize = 60;

/// Runs the check at up to `CANDIDATES` entries and requires `SUBSET`
/// checked entries. Entries are skipped when the loss is visibly non-smooth
/// within ε (one-sided slopes disagree, or central slopes at ε and ε/2
/// disagree); a ReLU or |·| kink there makes any central difference
/// meaningless. The screen uses loss values only, never the analytic slope.
/// `f(i, δ)` evaluates the loss with entry `i` shifted by δ and returns the
/// value with the shift actually applied.
fn screened_check(label: &str, analytic: &[(String, usize, f64)], f: impl Fn(usize, f32) -> (f64, f64)) {
    let mut checked = 0;
    for (idx, (name, i, a)) in analytic.iter().enumerate().take(CANDIDATES) {
        let (lp, hp) = f(idx, EPS);
        let (lm, hm) = f(idx, -EPS);
        let (l0, _) = f(idx, 0.0);
        let (fwd, bwd) = ((lp - l0) / hp, (l0 - lm) / -hm);
        let central = (lp - lm) / (hp - hm);
        let (lp2, hp2) = f(idx, EPS / 2.0);
        let (lm2, hm2) = f(idx, -EPS / 2.0);
        let half = (lp2 - lm2) / (hp2 - hm2);
        let scale = central.abs().max(1e-12);
        if (fwd - bwd).abs() > 2.0 * REL_TOL * scale || (central - half).abs() > REL_TOL * scale {
            continue;
        }
        compare(&format!("{label}.{name}[{i}]"), *a, central);
        checked += 1;
        if checked == SUBSET {
            return;
        }
    }
    panic!("{label}: only {checked} of {SUBSET} smooth entries among the top {CANDIDATES}");
}

fn compare(label: &str, analytic: f64, numeric: f64) {
    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
    assert!(
        rel <= REL_TOL,
        "{label}: analytic {analytic:.6e} vs numeric {numeric:.6e} (rel {rel:.2e})"
    );
}

/// Checks d loss / d inputs[which] on a subset of entries. The graph
/// supplies the analytic gradient; `oracle` is an independent f64
/// evaluation of the same loss used for the central differences, so f32
/// rounding of the graph output does not swamp small per-element slopes.
fn check_inputs(
    label: &str,
    inputs: &[Tensor],
    which: usize,
    build: impl Fn(&mut Graph, &[Var]) -> Var,
    oracle: impl Fn(&[Tensor]) -> f64,
) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    let graph_value = g.value(loss).item() as f64;
    let at = oracle(inputs);
    assert!((graph_value - at).abs() <= 1e-5 * at.abs().max(1.0), "{label}: graph {graph_value} vs oracle {at}");
    let grads = g.backward(loss);
    let grad = grads.get(vars[which]).expect("input gradient").clone();
    let mut idx: Vec<usize> = (0..grad.numel()).collect();
    idx.sort_by(|&a, &b| grad.data()[b].abs().total_cmp(&grad.data()[a].abs()));
    let analytic: Vec<(String, usize, f64)> = idx.iter().map(|&i| (format!("in{which}"), i, grad.data()[i] as f64)).collect();
    screened_check(label, &analytic, |k, d| {
        let i = analytic[k].1;
        let mut t = inputs.to_vec();
        t[which].data_mut()[i] += d;
        let applied = t[which].data()[i] as f64 - inputs[which].data()[i] as f64;
        (oracle(&t), applied)
    });
}

fn img(t: &Tensor) -> Image {
    Image::from_tensor(t.clone()).unwrap()
}

fn acts(ts: &[Tensor]) -> Activations {
    ts.iter().enumerate().map(|(i, t)| (i + 1, t.clone())).collect()
}

pub fn cycle_loss_gradient() {
    let ins: Vec<Tensor> = (0..4).map(|s| random(&[1, 3, 8, 8], s)).collect();
    for which in [1, 3] {
        check_inputs(
            "cycle",
            &ins,
            which,
            |g, v| lg::cycle(g, v[0], v[1], v[2], v[3]).unwrap(),
            |t| cycle_loss(&img(&t[0]), &img(&t[1]), &img(&t[2]), &img(&t[3])).unwrap(),
        );
    }
}

pub fn lsgan_gradients() {
    let ins = vec![random(&[1, 1, 8, 8], 1), random(&[1, 1, 8, 8], 2)];
    let maps = |t: &[Tensor]| (ScoreMap(t[0].clone()), ScoreMap(t[1].clone()));
    for which in [0, 1] {
        check_inputs(
            "lsgan_d",
            &ins,
            which,
            |g, v| lg::lsgan_discriminator(g, v[0], v[1]).unwrap(),
            |t| {
                let (r, f) = maps(t);
                lsgan_discriminator_loss(&r, &f).unwrap()
            },
        );
    }
    check_inputs(
        "lsgan_g",
        &ins,
        1,
        |g, v| lg::lsgan_generator(g, v[1]),
        |t| lsgan_generator_loss(&maps(t).1),
    );
}

pub fn key_matching_gradient() {
    // six layers per side, three tapped
    let ins: Vec<Tensor> = (0..24).map(|s| random(&[1, 3, 8, 8], 100 + s)).collect();
    let taps = FeatureTaps::new(vec![3, 5, 6]).unwrap();
    for which in [8, 10, 11, 20] {
        check_inputs(
            "key_matching",
            &ins,
            which,
            |g, v| lg::key_matching(g, &taps, &v[0..6], &v[6..12], &v[12..18], &v[18..24]).unwrap(),
            |t| key_matching_loss(&taps, &acts(&t[0..6]), &acts(&t[6..12]), &acts(&t[12..18]), &acts(&t[18..24])).unwrap(),
        );
    }
}

pub fn information_gradient() {
    let ins: Vec<Tensor> = (0..4).map(|s| random(&[1, 3, 8, 8], 7 + s)).collect();
    let (px, py) = (Placement::new(2, 3, 4, 4), Placement::new(0, 0, 5, 3));
    let comp = |t: &Tensor, p| CompositeImage {
        image: img(t),
        placement: p,
        message_id: String::new(),
    };
    for which in [0, 2] {
        check_inputs(
            "information",
            &ins,
            which,
            |g, v| {
                let a = lg::information_side(g, v[0], v[1], px).unwrap();
                let b = lg::information_side(g, v[2], v[3], py).unwrap();
                g.weighted_sum(&[(a, 1.0), (b, 1.0)]).unwrap()
            },
            |t| information_loss(&img(&t[0]), &comp(&t[1], px), &img(&t[2]), &comp(&t[3], py)).unwrap(),
        );
    }
}

pub fn keygen_classification_gradient() {
    let ins = vec![random(&[8, 2], 9)];
    let labels = [DomainLabel::X, DomainLabel::Y, DomainLabel::Y, DomainLabel::X].repeat(2);
    check_inputs(
        "keygen_ce",
        &ins,
        0,
        |g, v| lg::keygen_classification(g, v[0], &labels).unwrap(),
        |t| {
            let logits: Vec<[f32; 2]> = t[0].data().chunks(2).map(|c| [c[0], c[1]]).collect();
            keygen_classification_loss(&logits, &labels).unwrap()
        },
    );
}

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_size: (16, 16),
        residual_blocks: 1,
        base_channels: 4,
        disc_channels: 4,
        key_channels: 4,
        ..ArchConfig::default()
    }
}

/// Checks d loss / d params for every tensor of a set, sampling the largest
/// entries across the whole set.
fn check_params(label: &str, params: &ParamSet, build: impl Fn(&mut Graph, &[Var]) -> Var) {
    let eval = |p: &ParamSet| {
        let mut g = Graph::new();
        let vars = p.bind(&mut g, true);
        let loss = build(&mut g, &vars);
        (g, vars, loss)
    };
    let (g, vars, loss) = eval(params);
    let grads = g.backward(loss);
    let mut flat = Vec::new();
    for (t, v) in vars.iter().enumerate() {
        // untrained heads never enter the loss
        let Some(gt) = grads.get(*v) else { continue };
        flat.extend(gt.data().iter().enumerate().map(|(i, &d)| (t, i, d)));
    }
    flat.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    let names: Vec<String> = params.names().map(String::from).collect();
    let analytic: Vec<(String, usize, f64)> = flat.iter().map(|&(t, i, d)| (names[t].clone(), i, d as f64)).collect();
    screened_check(label, &analytic, |k, d| {
        let (t, i, _) = flat[k];
        let mut p = params.clone();
        p.get_mut(t).data_mut()[i] += d;
        let applied = p.get(t).data()[i] as f64 - params.get(t).data()[i] as f64;
        let (g, _, l) = eval(&p);
        (g.value(l).item() as f64, applied)
    });
}

pub fn generator_parameter_gradients() {
    let nets = Networks::init(&tiny_arch(), 11).unwrap();
    let (x, k, target) = (random(&[1, 3, 16, 16], 1), random(&[1, 3, 16, 16], 2), random(&[1, 3, 16, 16], 3));
    check_params("F", &nets.f.params, |g, v| {
        let (x, k, t) = (g.constant(x.clone()), g.constant(k.clone()), g.constant(target.clone()));
        let out = nets.f.forward_graph(g, v, x, k).unwrap();
        let _ = t;
        g.mean_squared_offset(out, 0.25)
    });
}

pub fn discriminator_parameter_gradients() {
    let nets = Networks::init(&tiny_arch(), 12).unwrap();
    let x = random(&[1, 3, 16, 16], 4);
    check_params("Dx", &nets.dx.params, |g, v| {
        let x = g.constant(x.clone());
        let s = nets.dx.forward_graph(g, v, x).unwrap();
        lg::lsgan_generator(g, s)
    });
}

pub fn key_generator_parameter_gradients() {
    let nets = Networks::init(&tiny_arch(), 13).unwrap();
    let x = random(&[1, 3, 16, 16], 5);
    check_params("K", &nets.k.params, |g, v| {
        let x = g.constant(x.clone());
        let out = nets.k.forward_graph(g, v, x).unwrap();
        let ce = lg::keygen_classification(g, out.logits, &[DomainLabel::Y]).unwrap();
        let l5 = g.mean_squared_offset(out.layers[4], 0.5);
        g.weighted_sum(&[(ce, 1.0), (l5, 1.0)]).unwrap()
    });
}
