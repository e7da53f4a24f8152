//! Reference models used by the examples, the CLI aliases and the tests.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mixture::{JumpKind, JumpMixture, MixtureComponent};
use crate::model::MapModel;

/// One state with `v = -1`, claims at rate 0.5, Exp(1) claim sizes.
pub fn classical() -> MapModel {
    MapModel::new(
        vec![-1.0],
        DMatrix::from_element(1, 1, -0.5),
        DMatrix::from_element(1, 1, 0.5),
        vec![((0, 0), JumpMixture::exponential(1.0))],
    )
    .expect("classical model is valid")
}

/// Two-state on/off fluid source: down at rate 1 in state 0, up at rate 1 in state 1.
pub fn onoff() -> MapModel {
    MapModel::new(
        vec![-1.0, 1.0],
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]),
        DMatrix::zeros(2, 2),
        vec![],
    )
    .expect("on/off model is valid")
}

fn comp(weight: f64, kind: JumpKind) -> MixtureComponent {
    MixtureComponent { weight, kind }
}

/// Three states (two falling, one rising) with atom, exponential and Erlang jumps.
pub fn mixed() -> MapModel {
    let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.0, 0.4, 0.0, 0.0, 0.2, 0.0, 0.3]);
    let off = DMatrix::from_row_slice(3, 3, &[0.0, 0.6, 0.3, 0.8, 0.0, 0.7, 0.5, 0.4, 0.0]);
    let c = with_diagonal(off, &d);
    let jumps = vec![
        (
            (0, 1),
            JumpMixture::new(vec![
                comp(0.5, JumpKind::Atom { location: 0.5 }),
                comp(0.5, JumpKind::Exponential { rate: 3.0 }),
            ])
            .unwrap(),
        ),
        ((1, 0), JumpMixture::erlang(2, 4.0)),
        ((2, 0), JumpMixture::exponential(1.5)),
        (
            (2, 2),
            JumpMixture::new(vec![
                comp(0.4, JumpKind::Atom { location: 1.0 }),
                comp(0.6, JumpKind::Erlang { shape: 3, rate: 5.0 }),
            ])
            .unwrap(),
        ),
    ];
    MapModel::new(vec![-1.5, 1.0, -0.8], c, d, jumps).expect("mixed model is valid")
}

fn with_diagonal(mut c: DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..c.nrows() {
        c[(i, i)] = 0.0;
        let out = c.row(i).sum() + d.row(i).sum();
        c[(i, i)] = -out;
    }
    c
}

fn random_kind(rng: &mut ChaCha8Rng, which: usize) -> JumpKind {
    match which {
        0 => JumpKind::Atom { location: rng.random_range(0.2..2.0) },
        1 => JumpKind::Exponential { rate: rng.random_range(1.0..4.0) },
        _ => JumpKind::Erlang { shape: rng.random_range(2..=3), rate: rng.random_range(2.0..6.0) },
    }
}

fn random_mixture(rng: &mut ChaCha8Rng, first: usize) -> JumpMixture {
    if rng.random_bool(0.5) {
        JumpMixture::new(vec![comp(1.0, random_kind(rng, first))]).unwrap()
    } else {
        let w = rng.random_range(0.2..0.8);
        let second = (first + rng.random_range(1..3)) % 3;
        JumpMixture::new(vec![comp(w, random_kind(rng, first)), comp(1.0 - w, random_kind(rng, second))]).unwrap()
    }
}

/// Random 3-state model with both drift signs present, at least one atom,
/// one exponential and one Erlang jump law, and mean drift at most -0.15.
pub fn random_model(seed: u64) -> MapModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed);
    let n = 3;
    let mut signs = [-1.0, -1.0, 1.0];
    if rng.random_bool(0.5) {
        signs = [-1.0, 1.0, 1.0];
    }
    signs.shuffle(&mut rng);
    let mut v: Vec<f64> = signs.iter().map(|s| s * rng.random_range(0.5..2.0)).collect();
    let mut off = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off[(i, j)] = rng.random_range(0.1..1.5);
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng);
    let mut d = DMatrix::zeros(n, n);
    let mut jumps = Vec::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if k < 3 || rng.random_bool(0.3) {
            d[(i, j)] = rng.random_range(0.1..0.8);
            jumps.push(((i, j), random_mixture(&mut rng, k % 3)));
        }
    }
    let c = with_diagonal(off, &d);
    let probe = MapModel::new(v.clone(), c.clone(), d.clone(), jumps.clone()).expect("random model is valid");
    let pi = probe.stationary_dist().expect("irreducible");
    let jm = probe.jump_mean_matrix();
    let up: f64 = (0..n).map(|i| pi[i] * (v[i].max(0.0) + jm.row(i).sum())).sum();
    let down: f64 = (0..n).map(|i| pi[i] * (-v[i]).max(0.0)).sum();
    let target = -0.15 - rng.random_range(0.0..0.5);
    if up - down > target {
        let s = (up - target) / down;
        for x in v.iter_mut().filter(|x| **x < 0.0) {
            *x *= s;
        }
    }
    MapModel::new(v, c, d, jumps).expect("random model is valid")
}
