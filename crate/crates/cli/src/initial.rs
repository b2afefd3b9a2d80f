//! Initial product states.

use chebmps::hamiltonian::Model;
use chebmps::pauli::bloch_state;
use chebmps::{Error, Mps, Result, C64};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::InitialSpec;

pub type Local = [C64; 2];

const STARTS: usize = 64;
const MAX_ALTERNATIONS: usize = 500;
const LOCAL_TOL: f64 = 1e-10;
pub const ENERGY_TOL: f64 = 1e-8;

/// Built state with its single-site vectors.
#[derive(Clone, Debug)]
pub struct InitialState {
    pub local: Vec<Local>,
    pub energy: f64,
}

impl InitialState {
    pub fn mps(&self) -> Result<Mps> {
        Mps::from_product(&self.local)
    }
}

pub fn build_initial_state(spec: &InitialSpec, m: &Model, e0: f64, seed: u64) -> Result<InitialState> {
    let local = match spec {
        InitialSpec::YPlus => y_plus(m.n),
        InitialSpec::ZSt2 => z_st2(m.n),
        InitialSpec::Step(e) => step_state(m, e.unwrap_or(0.5 * m.h_norm_max))?,
        InitialSpec::EnergyTarget => energy_target(m, e0, seed)?,
    };
    let energy = product_energy(m, &local);
    Ok(InitialState { local, energy })
}

fn up() -> Local {
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
}

fn down() -> Local {
    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
}

pub fn y_plus(n: usize) -> Vec<Local> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    vec![[C64::new(r, 0.0), C64::new(0.0, r)]; n]
}

/// `|0011 0011 ...>`; a trailing partial pattern is completed with `|0>`.
pub fn z_st2(n: usize) -> Vec<Local> {
    (0..n)
        .map(|i| {
            // the last pair of an N = 2 mod 4 chain is already |00>
            let pad = n % 2 == 1 && i == n - 1;
            if (i / 2) % 2 == 1 && !pad {
                down()
            } else {
                up()
            }
        })
        .collect()
}

fn expect1(op: &Array2<C64>, a: &Local) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += a[i].conj() * op[[i, j]] * a[j];
        }
    }
    s.re
}

fn expect2(op: &Array2<C64>, a: &Local, b: &Local) -> f64 {
    let v = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
    let mut s = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            s += v[i].conj() * op[[i, j]] * v[j];
        }
    }
    s.re
}

/// `<h_n>` on a product state, one entry per local term.
pub fn product_profile(m: &Model, local: &[Local]) -> Vec<f64> {
    let n = m.n;
    (0..n)
        .map(|k| {
            if k + 1 < n {
                expect2(&m.terms[k], &local[k], &local[k + 1])
            } else {
                expect1(&m.terms[k], &local[k])
            }
        })
        .collect()
}

pub fn product_energy(m: &Model, local: &[Local]) -> f64 {
    product_profile(m, local).iter().sum()
}

/// Hermitian 2×2 eigenpairs, ascending.
fn eig2(a: &Array2<C64>) -> [(f64, Local); 2] {
    let (p, q, b) = (a[[0, 0]].re, a[[1, 1]].re, a[[0, 1]]);
    let mid = 0.5 * (p + q);
    let r = (0.25 * (p - q).powi(2) + b.norm_sqr()).sqrt();
    let vec_for = |lam: f64| -> Local {
        if b.norm() > 1e-14 {
            let v = [b, C64::new(lam - p, 0.0)];
            let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            [v[0] / nv, v[1] / nv]
        } else if (lam - p).abs() <= (lam - q).abs() {
            up()
        } else {
            down()
        }
    };
    let lo = mid - r;
    let hi = mid + r;
    let vlo = vec_for(lo);
    let mut vhi = vec_for(hi);
    if b.norm() <= 1e-14 && r < 1e-14 {
        vhi = down();
    }
    [(lo, vlo), (hi, vhi)]
}

/// `tr_2[(1 ⊗ |b><b|) h]` and `tr_1[(|a><a| ⊗ 1) h]`.
fn reduce_right(h: &Array2<C64>, b: &Local) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(i, j)| {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..2 {
            for l in 0..2 {
                s += b[k].conj() * h[[2 * i + k, 2 * j + l]] * b[l];
            }
        }
        s
    })
}

fn reduce_left(h: &Array2<C64>, a: &Local) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(i, j)| {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..2 {
            for l in 0..2 {
                s += a[k].conj() * h[[2 * k + i, 2 * l + j]] * a[l];
            }
        }
        s
    })
}

fn orth(a: &Local) -> Local {
    [-a[1].conj(), a[0].conj()]
}

fn random_local<R: Rng>(rng: &mut R) -> Local {
    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    bloch_state(theta, phi)
}

/// Two-site product state extremizing `<ab|h|ab>`; `upper` picks the maximum.
fn extremize_pair<R: Rng>(h: &Array2<C64>, upper: bool, rng: &mut R) -> (f64, Local, Local) {
    let pick = if upper { 1 } else { 0 };
    let mut best: Option<(f64, Local, Local)> = None;
    for _ in 0..STARTS {
        let mut b = random_local(rng);
        let mut a = eig2(&reduce_right(h, &b))[pick].1;
        let mut val = expect2(h, &a, &b);
        for _ in 0..MAX_ALTERNATIONS {
            b = eig2(&reduce_left(h, &a))[pick].1;
            a = eig2(&reduce_right(h, &b))[pick].1;
            let next = expect2(h, &a, &b);
            let done = (next - val).abs() < LOCAL_TOL * LOCAL_TOL;
            val = next;
            if done {
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((v, _, _)) => {
                if upper {
                    val > *v
                } else {
                    val < *v
                }
            }
        };
        if better {
            best = Some((val, a, b));
        }
    }
    best.expect("at least one start")
}

/// Largest `|<ab|h|ab>|` over product pairs, with the maximizing pair.
pub fn max_abs_pair(h: &Array2<C64>, seed: u64) -> (f64, Local, Local) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = extremize_pair(h, true, &mut rng);
    let lo = extremize_pair(h, false, &mut rng);
    if hi.0.abs() >= lo.0.abs() {
        (hi.0.abs(), hi.1, hi.2)
    } else {
        (lo.0.abs(), lo.1, lo.2)
    }
}

/// Extremal product states in the frames built on the odd terms.
/// Returns `(P-, E-, P+, E+)`.
pub fn extremal_frame_states(m: &Model, seed: u64) -> Result<(Vec<Local>, f64, Vec<Local>, f64)> {
    let n = m.n;
    let mut frames: Vec<[Local; 2]> = Vec::with_capacity(n);
    let mut k = 0;
    while k + 1 < n {
        let (mk, a, b) = max_abs_pair(&m.terms[k], seed.wrapping_add(k as u64));
        if mk < m.h_min / 3.0 - 1e-9 {
            return Err(Error::NoConvergence(format!(
                "local maximum {mk} on term {k} is below h_min/3 = {}",
                m.h_min / 3.0
            )));
        }
        frames.push([a, orth(&a)]);
        frames.push([b, orth(&b)]);
        k += 2;
    }
    if frames.len() < n {
        let eigs = eig2(&m.terms[n - 1]);
        frames.push([eigs[1].1, eigs[0].1]);
    }
    let term = |k: usize, x: usize, y: usize| -> f64 {
        if k + 1 < n {
            expect2(&m.terms[k], &frames[k][x], &frames[k + 1][y])
        } else {
            expect1(&m.terms[k], &frames[k][x])
        }
    };
    // exact optimum over the 2^N frame-bit strings by a chain recursion
    let optimum = |upper: bool| -> (Vec<Local>, f64) {
        let better = |x: f64, y: f64| if upper { x > y } else { x < y };
        let mut score = [0.0f64; 2];
        let mut back: Vec<[usize; 2]> = Vec::with_capacity(n);
        for k in 0..n - 1 {
            let mut next = [0.0; 2];
            let mut arg = [0usize; 2];
            for y in 0..2 {
                let c0 = score[0] + term(k, 0, y);
                let c1 = score[1] + term(k, 1, y);
                if better(c1, c0) {
                    next[y] = c1;
                    arg[y] = 1;
                } else {
                    next[y] = c0;
                    arg[y] = 0;
                }
            }
            back.push(arg);
            score = next;
        }
        let f0 = score[0] + term(n - 1, 0, 0);
        let f1 = score[1] + term(n - 1, 1, 0);
        let mut bit = if better(f1, f0) { 1 } else { 0 };
        let mut bits = vec![0usize; n];
        bits[n - 1] = bit;
        for k in (0..n - 1).rev() {
            bit = back[k][bit];
            bits[k] = bit;
        }
        let local: Vec<Local> = bits.iter().enumerate().map(|(i, &b)| frames[i][b]).collect();
        let e = product_energy(m, &local);
        (local, e)
    };
    let (p_hi, e_hi) = optimum(true);
    let (p_lo, e_lo) = optimum(false);
    let bound = n as f64 * m.h_min / 6.0;
    if e_hi < bound - 1e-9 || e_lo > -bound + 1e-9 {
        log::warn!("extremal frame energies [{e_lo}, {e_hi}] do not cover ±{bound}");
    }
    Ok((p_lo, e_lo, p_hi, e_hi))
}

/// Geodesic on the Bloch sphere from `a` (t = 0) to `b` (t = 1).
fn geodesic(a: &Local, b: &Local, t: f64) -> Local {
    let ov = a[0].conj() * b[0] + a[1].conj() * b[1];
    let phase = if ov.norm() > 1e-15 { ov.conj() / ov.norm() } else { C64::new(1.0, 0.0) };
    let b2 = [b[0] * phase, b[1] * phase];
    let c = ov.norm().min(1.0);
    let perp = [b2[0] - a[0] * c, b2[1] - a[1] * c];
    let np = (perp[0].norm_sqr() + perp[1].norm_sqr()).sqrt();
    if np < 1e-15 {
        return *a;
    }
    let perp = [perp[0] / np, perp[1] / np];
    let ang = c.acos() * t;
    let (s, co) = ang.sin_cos();
    let v = [a[0] * co + perp[0] * s, a[1] * co + perp[1] * s];
    let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / nv, v[1] / nv]
}

/// Root of `f` on `[0, 1]` by bisection; `f(0)` and `f(1)` must differ in sign.
fn bisect(f: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Product state with `<H> = e0`, interpolating between the extremal
/// frame states.
pub fn energy_target(m: &Model, e0: f64, seed: u64) -> Result<Vec<Local>> {
    let (p_lo, e_lo, p_hi, e_hi) = extremal_frame_states(m, seed)?;
    if e0 < e_lo - ENERGY_TOL || e0 > e_hi + ENERGY_TOL {
        return Err(Error::InvalidArgument(format!(
            "target energy {e0} outside the achievable range [{e_lo}, {e_hi}]"
        )));
    }
    let path = |t: f64| -> Vec<Local> { p_hi.iter().zip(&p_lo).map(|(a, b)| geodesic(a, b, t)).collect() };
    let t = bisect(|t| product_energy(m, &path(t)) - e0)
        .ok_or_else(|| Error::NoConvergence("energy target bracket lost".into()))?;
    let local = path(t);
    let e = product_energy(m, &local);
    if (e - e0).abs() > ENERGY_TOL {
        return Err(Error::NoConvergence(format!("energy target reached {e}, wanted {e0}")));
    }
    Ok(local)
}

/// Uniform single-site states with smallest and largest bulk energy density.
fn bulk_extremes(h: &Array2<C64>) -> (Local, f64, Local, f64) {
    let density = |a: &Local| expect2(h, a, a);
    let refine = |upper: bool| -> (Local, f64) {
        let sign = if upper { 1.0 } else { -1.0 };
        let (nt, np) = (64, 128);
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for i in 0..=nt {
            for j in 0..np {
                let th = std::f64::consts::PI * i as f64 / nt as f64;
                let ph = 2.0 * std::f64::consts::PI * j as f64 / np as f64;
                let v = sign * density(&bloch_state(th, ph));
                if v > best.2 {
                    best = (th, ph, v);
                }
            }
        }
        let (mut th, mut ph, mut v) = best;
        let mut step = std::f64::consts::PI / nt as f64;
        while step > 1e-12 {
            let mut moved = false;
            for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let w = sign * density(&bloch_state(th + dt, ph + dp));
                if w > v {
                    th += dt;
                    ph += dp;
                    v = w;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        (bloch_state(th, ph), sign * v)
    };
    let (lo, elo) = refine(false);
    let (hi, ehi) = refine(true);
    (lo, elo, hi, ehi)
}

/// Left half at bulk density `+e`, right half near `-e`, total energy zero.
pub fn step_state(m: &Model, e: f64) -> Result<Vec<Local>> {
    let n = m.n;
    if n < 4 {
        return Err(Error::InvalidArgument("step state needs N >= 4".into()));
    }
    let bulk = &m.terms[(n / 2).saturating_sub(1).max(1)];
    let (lo, elo, hi, ehi) = bulk_extremes(bulk);
    if e > ehi + 1e-12 || -e < elo - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "step height {e} outside the uniform product-state density range [{elo}, {ehi}]"
        )));
    }
    let along = |t: f64| geodesic(&lo, &hi, t);
    let at_density = |target: f64| -> Result<Local> {
        let t = bisect(|t| {
            let a = along(t);
            expect2(bulk, &a, &a) - target
        })
        .ok_or_else(|| Error::NoConvergence(format!("no uniform state at density {target}")))?;
        Ok(along(t))
    };
    let left = at_density(e.min(ehi))?;
    let half = n / 2;
    let build = |right: &Local| -> Vec<Local> { (0..n).map(|i| if i < half { left } else { *right }).collect() };
    // right-half state on the segment from the lowest-density state to the
    // `-e` state and beyond, chosen so the total vanishes
    let right_guess = at_density((-e).max(elo))?;
    let total = |t: f64| -> f64 {
        let r = if t <= 0.5 { geodesic(&lo, &right_guess, 2.0 * t) } else { geodesic(&right_guess, &hi, 2.0 * t - 1.0) };
        product_energy(m, &build(&r))
    };
    let t = bisect(total).ok_or_else(|| Error::NoConvergence("step state cannot reach zero total energy".into()))?;
    let r = if t <= 0.5 { geodesic(&lo, &right_guess, 2.0 * t) } else { geodesic(&right_guess, &hi, 2.0 * t - 1.0) };
    let local = build(&r);
    let etot = product_energy(m, &local);
    if etot.abs() > ENERGY_TOL {
        return Err(Error::NoConvergence(format!("step state total energy {etot}")));
    }
    Ok(local)
}
