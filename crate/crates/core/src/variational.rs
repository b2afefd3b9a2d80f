//! Direct minimization of the energy variance over MPS of fixed bond
//! dimension, with a quadratic penalty holding the mean energy near a target.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array3, Array4, ArrayD};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hamiltonian::Model;
use crate::linalg;
use crate::mps::{local_term, transfer_one, transfer_one_right, transfer_two, Mps};
use crate::tensor::{contract, Tensor};

#[derive(Clone, Debug)]
pub struct VarOpts {
    /// Bond cap; the starting state must not exceed it.
    pub d_max: usize,
    pub e0: f64,
    /// Penalty weight; `None` picks `10 var / N^2`, re-picked after the first
    /// sweep.
    pub lambda: Option<f64>,
    pub max_sweeps: usize,
    /// Gradient steps per site visit.
    pub inner_steps: usize,
    /// Initial line-search step.
    pub step_size: f64,
    pub restarts: usize,
    /// Relative cost change per sweep below which the run stops.
    pub tol: f64,
    pub seed: u64,
    pub timing: bool,
}

impl Default for VarOpts {
    fn default() -> Self {
        Self {
            d_max: 64,
            e0: 0.0,
            lambda: None,
            max_sweeps: 20,
            inner_steps: 200,
            step_size: 1e-2,
            restarts: 3,
            tol: 1e-8,
            seed: 0x5eed,
            timing: false,
        }
    }
}

impl VarOpts {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("variational option {what}")));
        if self.d_max == 0 {
            return bad("d_max must be positive");
        }
        if self.max_sweeps == 0 || self.inner_steps == 0 {
            return bad("sweep and step counts must be positive");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol must lie in (0, 1)");
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return bad("lambda must be positive");
            }
        }
        Ok(())
    }
}

/// Value of the cost and its parts for one tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalCost {
    pub cost: f64,
    pub variance: f64,
    pub energy: f64,
    pub norm_sqr: f64,
}

/// Everything the cost at one site depends on besides the site tensor.
/// Environments are indexed `(bra, mpo, ket)` and `(bra, outer, inner, ket)`.
#[derive(Clone, Debug)]
pub struct LocalEnvironment {
    pub left1: Tensor,
    pub right1: Tensor,
    pub left2: Tensor,
    pub right2: Tensor,
    pub w: Array4<C64>,
    pub e0: f64,
    pub lambda: f64,
}

impl LocalEnvironment {
    /// Environment of `site` in `s`, which is first canonicalized there.
    pub fn at(s: &mut Mps, w: &crate::mpo::Mpo, site: usize, e0: f64, lambda: f64) -> Result<Self> {
        let n = s.len();
        if site >= n || w.len() != n {
            return Err(Error::OutOfRange { index: site, limit: n });
        }
        s.canonicalize(site)?;
        let mut sw = Sweeper {
            w,
            left1: vec![ones(3); n + 1],
            right1: vec![ones(3); n + 1],
            left2: vec![ones(4); n + 1],
            right2: vec![ones(4); n + 1],
        };
        for i in 0..site {
            sw.update_left(s, i)?;
        }
        for i in (site + 1..n).rev() {
            sw.update_right(s, i)?;
        }
        Ok(sw.env(site, e0, lambda))
    }

    fn apply1(&self, a: &Array3<C64>) -> Result<Array3<C64>> {
        local_term(&self.left1, &self.w, a, &self.right1)
    }

    /// `H^2 A` through the two-layer environments.
    fn apply2(&self, a: &Array3<C64>) -> Result<Array3<C64>> {
        let a_t = Tensor::from_array(a.clone().into_dyn());
        let w_t = Tensor::from_array(self.w.clone().into_dyn());
        let x = contract(&self.left2, &a_t, &[(3, 0)])?; // (a, o, i, t, b')
        let y = contract(&x, &w_t, &[(2, 0), (3, 2)])?; // (a, o, b', u, i')
        let z = contract(&y, &w_t, &[(1, 0), (3, 2)])?; // (a, b', i', s, o')
        let f = contract(&z, &self.right2, &[(1, 3), (2, 2), (4, 1)])?; // (a, s, a')
        Ok(f.into_array().into_dimensionality()?)
    }

    pub fn cost(&self, a: &Array3<C64>) -> Result<LocalCost> {
        Ok(self.evaluate(a, false)?.0)
    }

    fn evaluate(&self, a: &Array3<C64>, grad: bool) -> Result<(LocalCost, Option<Array3<C64>>)> {
        let n = linalg::frobenius(a).powi(2);
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let h1 = self.apply1(a)?;
        let h2 = self.apply2(a)?;
        let inner = |x: &Array3<C64>| -> f64 { a.iter().zip(x.iter()).map(|(p, q)| (p.conj() * q).re).sum() };
        let e = inner(&h1) / n;
        let q = inner(&h2) / n;
        let variance = q - e * e;
        let cost = variance + self.lambda * (e - self.e0).powi(2);
        let local = LocalCost {
            cost,
            variance,
            energy: e,
            norm_sqr: n,
        };
        if !grad {
            return Ok((local, None));
        }
        // dC/dA* = dq - 2 e de + 2 lambda (e - e0) de, with
        // de = (H A - e A)/n and dq = (H^2 A - q A)/n
        let ce = -2.0 * e + 2.0 * self.lambda * (e - self.e0);
        let mut g = Array3::<C64>::zeros(a.dim());
        ndarray::Zip::from(&mut g)
            .and(a)
            .and(&h1)
            .and(&h2)
            .for_each(|g, &a, &h1, &h2| {
                *g = 2.0 * ((h2 - a * q) + (h1 - a * e) * ce) / n;
            });
        Ok((local, Some(g)))
    }
}

/// Cost and its gradient with respect to the real and imaginary parts of
/// the tensor, packed as `d/dRe + i d/dIm`.
pub fn local_cost_and_gradient(env: &LocalEnvironment, a: &Array3<C64>) -> Result<(LocalCost, Array3<C64>)> {
    let (c, g) = env.evaluate(a, true)?;
    Ok((c, g.expect("gradient requested")))
}

/// Two-layer right environment step; indices `(bra, outer, inner, ket)`.
fn transfer_two_right(env: &Tensor, bra: &Array3<C64>, w: &Array4<C64>, ket: &Array3<C64>) -> Result<Tensor> {
    let ket_t = Tensor::from_array(ket.clone().into_dyn());
    let w_t = Tensor::from_array(w.clone().into_dyn());
    let bra_t = Tensor::from_array(bra.mapv(|x| x.conj()).into_dyn());
    let x = contract(&ket_t, env, &[(2, 3)])?; // (b, t, a', o', i')
    let y = contract(&w_t, &x, &[(2, 1), (3, 4)])?; // (i, u, b, a', o')
    let z = contract(&w_t, &y, &[(2, 1), (3, 4)])?; // (o, s, i, b, a')
    contract(&bra_t, &z, &[(1, 1), (2, 4)]) // (a, o, i, b)
}

fn ones(rank: usize) -> Tensor {
    Tensor::from_array(ArrayD::from_elem(vec![1; rank], C64::new(1.0, 0.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarTraceRow {
    pub sweep: usize,
    pub cost: f64,
    pub variance: f64,
    pub energy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct VarResult {
    pub state: Mps,
    /// Cost after every sweep of the kept run, all at the final `lambda`.
    pub trace: Vec<VarTraceRow>,
    pub lambda: f64,
    pub variance: f64,
    pub energy: f64,
    pub converged: bool,
    /// Notes on restarts and on a violated energy constraint.
    pub flags: Vec<String>,
}

impl VarResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["sweep", "cost", "variance", "energy", "seconds"])?;
        for r in &self.trace {
            wr.write_record([
                r.sweep.to_string(),
                format!("{:e}", r.cost),
                format!("{:e}", r.variance),
                format!("{:e}", r.energy),
                format!("{:e}", r.seconds),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Sweeping state: environments for every cut of a canonical MPS.
struct Sweeper<'a> {
    w: &'a crate::mpo::Mpo,
    left1: Vec<Tensor>,
    right1: Vec<Tensor>,
    left2: Vec<Tensor>,
    right2: Vec<Tensor>,
}

impl<'a> Sweeper<'a> {
    /// `s` must be canonical at site 0.
    fn new(s: &Mps, w: &'a crate::mpo::Mpo) -> Result<Self> {
        let n = s.len();
        let mut sw = Self {
            w,
            left1: vec![ones(3); n + 1],
            right1: vec![ones(3); n + 1],
            left2: vec![ones(4); n + 1],
            right2: vec![ones(4); n + 1],
        };
        for i in (1..n).rev() {
            sw.update_right(s, i)?;
        }
        Ok(sw)
    }

    fn update_left(&mut self, s: &Mps, i: usize) -> Result<()> {
        let a = s.site(i);
        let w = self.w.site(i);
        self.left1[i + 1] = transfer_one(&self.left1[i], a, w, a)?;
        self.left2[i + 1] = transfer_two(&self.left2[i], a, w, w, a)?;
        Ok(())
    }

    fn update_right(&mut self, s: &Mps, i: usize) -> Result<()> {
        let a = s.site(i);
        let w = self.w.site(i);
        self.right1[i] = transfer_one_right(&self.right1[i + 1], a, w, a)?;
        self.right2[i] = transfer_two_right(&self.right2[i + 1], a, w, a)?;
        Ok(())
    }

    fn env(&self, i: usize, e0: f64, lambda: f64) -> LocalEnvironment {
        LocalEnvironment {
            left1: self.left1[i].clone(),
            right1: self.right1[i + 1].clone(),
            left2: self.left2[i].clone(),
            right2: self.right2[i + 1].clone(),
            w: self.w.site(i).clone(),
            e0,
            lambda,
        }
    }
}

/// Backtracking gradient descent on one unit-norm site tensor. The cost is
/// scale invariant, so every trial point is renormalized; a step is kept only
/// if it lowers the cost.
fn optimize_site(env: &LocalEnvironment, a: &mut Array3<C64>, steps: usize, step_size: f64) -> Result<LocalCost> {
    let mut eta = step_size;
    let nrm = linalg::frobenius(a);
    a.mapv_inplace(|x| x / nrm);
    let (mut cur, g) = local_cost_and_gradient(env, a)?;
    let mut g = g;
    for _ in 0..steps {
        let gn = linalg::frobenius(&g);
        if gn <= 1e-14 * cur.cost.abs().max(1e-300) || gn == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = a.clone();
            trial.scaled_add(C64::new(-eta, 0.0), &g);
            let tn = linalg::frobenius(&trial);
            trial.mapv_inplace(|x| x / tn);
            let (c, tg) = local_cost_and_gradient(env, &trial)?;
            if c.cost.is_finite() && c.cost < cur.cost {
                *a = trial;
                cur = c;
                g = tg;
                eta *= 2.0;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(cur)
}

struct Run {
    state: Mps,
    trace: Vec<VarTraceRow>,
    lambda: f64,
    converged: bool,
}

fn sweep_run(s0: &Mps, m: &Model, opts: &VarOpts, lambda0: f64, rescale: bool, start: &Instant) -> Result<Run> {
    let mut s = s0.clone();
    s.canonicalize(0)?;
    let n = s.len();
    let mut sw = Sweeper::new(&s, &m.mpo)?;
    let mut lambda = lambda0;
    let mut trace: Vec<VarTraceRow> = Vec::new();
    let mut converged = false;
    let mut last = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut cost = LocalCost {
            cost: f64::NAN,
            variance: f64::NAN,
            energy: f64::NAN,
            norm_sqr: 1.0,
        };
        for i in 0..n {
            let env = sw.env(i, opts.e0, lambda);
            let mut a = s.site(i).clone();
            cost = optimize_site(&env, &mut a, opts.inner_steps, opts.step_size)?;
            s.sites_mut()[i] = a;
            if i + 1 < n {
                s.left_orthonormalize(i)?;
                sw.update_left(&s, i)?;
            }
        }
        for i in (0..n).rev() {
            let env = sw.env(i, opts.e0, lambda);
            let mut a = s.site(i).clone();
            cost = optimize_site(&env, &mut a, opts.inner_steps, opts.step_size)?;
            s.sites_mut()[i] = a;
            if i > 0 {
                s.right_orthonormalize(i)?;
                sw.update_right(&s, i)?;
            }
        }
        s.set_center(Some(0));
        if !cost.cost.is_finite() {
            return Err(Error::NonFinite("variational cost"));
        }
        if rescale && sweep == 1 {
            lambda = 10.0 * cost.variance.max(0.0) / (n * n) as f64;
            lambda = lambda.max(f64::MIN_POSITIVE);
            let env = sw.env(0, opts.e0, lambda);
            cost = env.cost(s.site(0))?;
        }
        trace.push(VarTraceRow {
            sweep,
            cost: cost.cost,
            variance: cost.variance,
            energy: cost.energy,
            seconds: if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if (last - cost.cost).abs() <= opts.tol * cost.cost.abs() || cost.cost <= 1e-14 {
            converged = true;
            break;
        }
        last = cost.cost;
    }
    s.set_log_norm(0.0);
    s.normalize()?;
    Ok(Run {
        state: s,
        trace,
        lambda,
        converged,
    })
}

fn perturbed(s: &Mps, scale: f64, rng: &mut ChaCha8Rng) -> Result<Mps> {
    let mut t = s.clone();
    for a in t.sites_mut() {
        let nrm = linalg::frobenius(a) / (a.len() as f64).sqrt();
        a.mapv_inplace(|x| {
            x + C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * (scale * nrm / 2f64.sqrt())
        });
    }
    t.set_center(None);
    t.normalize()?;
    Ok(t)
}

/// Minimizes `var(H) + lambda (<H> - e0)^2` by one-site sweeps, restarting
/// from noisy copies of the best state and keeping the lowest cost.
pub fn minimize_variance(s0: &Mps, m: &Model, opts: &VarOpts) -> Result<VarResult> {
    opts.validate()?;
    if s0.len() != m.n {
        return Err(Error::LengthMismatch { left: s0.len(), right: m.n });
    }
    if s0.max_bond() > opts.d_max {
        return Err(Error::InvalidArgument(format!(
            "starting bond {} exceeds d_max {}",
            s0.max_bond(),
            opts.d_max
        )));
    }
    let start = Instant::now();
    let var0 = crate::analysis::variance(s0, m)?;
    let (lambda0, rescale) = match opts.lambda {
        Some(l) => (l, false),
        None => ((10.0 * var0 / (m.n * m.n) as f64).max(f64::MIN_POSITIVE), true),
    };
    let mut best = sweep_run(s0, m, opts, lambda0, rescale, &start)?;
    let mut flags = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for r in 0..opts.restarts {
        let seed_state = perturbed(&best.state, 1e-2, &mut rng)?;
        match sweep_run(&seed_state, m, opts, best.lambda, false, &start) {
            Ok(run) => {
                let (a, b) = (run.trace.last().map(|t| t.cost), best.trace.last().map(|t| t.cost));
                if let (Some(a), Some(b)) = (a, b) {
                    if a < b {
                        flags.push(format!("restart {} improved the cost from {b:e} to {a:e}", r + 1));
                        best = run;
                    }
                }
            }
            Err(e) => flags.push(format!("restart {} failed: {e}", r + 1)),
        }
    }
    let energy = best.state.expectation(&m.mpo)?.re;
    let variance = crate::analysis::variance(&best.state, m)?;
    let allowed = (variance.max(0.0).sqrt() / 10.0).max(1e-4 * m.n as f64);
    if (energy - opts.e0).abs() > allowed {
        flags.push(format!(
            "energy {energy} misses the target {} by more than {allowed:e}",
            opts.e0
        ));
    }
    Ok(VarResult {
        state: best.state,
        trace: best.trace,
        lambda: best.lambda,
        variance,
        energy,
        converged: best.converged,
        flags,
    })
}
