//! Jackson-damped Chebyshev delta filter on MPS, and the kernel utilities it
//! shares with the exact backend.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{Model, SpectrumEdges};
use crate::linalg::Truncation;
use crate::mpo::Mpo;
use crate::mps::Mps;
use crate::tensor::SchmidtSpectrum;

/// Jackson damping factor `g_k^(M)`.
pub fn jackson(k: usize, m: usize) -> Result<f64> {
    if k > m {
        return Err(Error::OutOfRange {
            index: k,
            limit: m + 1,
        });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let mp1 = (m + 1) as f64;
    let a = PI * k as f64 / mp1;
    let b = PI / mp1;
    Ok(((mp1 - k as f64) * a.cos() + a.sin() * b.cos() / b.sin()) / mp1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelCoefficients {
    pub m: usize,
    /// `g[k] = g_k^(M)` for `k = 0..=M`.
    pub g: Vec<f64>,
    /// Damped delta-expansion coefficients; odd entries are exactly zero.
    pub c: Vec<f64>,
}

impl KernelCoefficients {
    /// `sum_n c_n T_n(x)` for `|x| <= 1`.
    pub fn eval(&self, x: f64) -> f64 {
        let theta = x.clamp(-1.0, 1.0).acos();
        self.c
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(n, c)| c * (n as f64 * theta).cos())
            .sum()
    }
}

pub fn delta_coefficients(m: usize) -> KernelCoefficients {
    let g: Vec<f64> = (0..=m).map(|k| jackson(k, m).expect("k <= m")).collect();
    let mut c = vec![0.0; m + 1];
    for n in 0..=m / 2 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let w = if n == 0 { 1.0 } else { 2.0 };
        c[2 * n] = sign * w / PI * g[2 * n];
    }
    KernelCoefficients { m, g, c }
}

/// Width of the Gaussian the damped series approximates.
pub fn envelope_sigma(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    Ok(PI / m as f64)
}

/// Predicted `δ` of the Chebyshev-filtered product state for rescaling `alpha`:
/// `δ² = (1/σ_p² + 2 α² M² / (π² N²))^-1`.
pub fn predicted_delta_cheby_alpha(n: usize, m: usize, sigma_p: f64, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    let inv = 1.0 / (sigma_p * sigma_p) + 2.0 * alpha * alpha * m * m / (PI * PI * n * n);
    inv.powf(-0.5)
}

pub fn predicted_delta_cheby(n: usize, m: usize, sigma_p: f64) -> f64 {
    predicted_delta_cheby_alpha(n, m, sigma_p, 1.0)
}

/// Large-N limit `π N / (√2 M)`.
pub fn predicted_delta_cheby_limit(n: usize, m: usize) -> f64 {
    PI * n as f64 / (2f64.sqrt() * m as f64)
}

/// Cosine filter: `δ² = (1/σ_p² + 2M/N²)^-1`.
pub fn predicted_delta_cos_full(n: usize, m: usize, sigma_p: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (1.0 / (sigma_p * sigma_p) + 2.0 * m / (n * n)).powf(-0.5)
}

/// Large-N limit `N / √(2M)`.
pub fn predicted_delta_cos(n: usize, m: usize) -> f64 {
    n as f64 / (2.0 * m as f64).sqrt()
}

/// Everything fixed about a filter run except the order.
#[derive(Clone, Debug)]
pub struct FilterSetup {
    pub model: Model,
    pub e0: f64,
    pub alpha: f64,
    pub edges: Option<SpectrumEdges>,
    /// `alpha (H - e0) / N`.
    pub h_tilde: Mpo,
}

impl FilterSetup {
    /// Uses `alpha` if given, else the 0.9 rule on DMRG edges.
    pub fn new(model: &Model, e0: f64, alpha: Option<f64>, d_dmrg: usize) -> Result<Self> {
        let (alpha, edges) = match alpha {
            Some(a) => (a, None),
            None => {
                let edges = crate::hamiltonian::spectrum_edges(model, d_dmrg)?;
                if !edges.contains(e0) {
                    log::warn!(
                        "target energy {e0} outside estimated spectrum [{}, {}]",
                        edges.e_min,
                        edges.e_max
                    );
                }
                (edges.alpha(model.n, e0), Some(edges))
            }
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        let h_tilde = model.rescaled(e0, alpha)?;
        Ok(Self {
            model: model.clone(),
            e0,
            alpha,
            edges,
            h_tilde,
        })
    }

    pub fn with_alpha(model: &Model, e0: f64, alpha: f64) -> Result<Self> {
        Self::new(model, e0, Some(alpha), 0)
    }
}

#[derive(Clone, Debug)]
pub struct FilterOpts {
    pub trunc: Truncation,
    /// Record every this many steps; `None` means `ceil(M / 50)`. The final
    /// step is always recorded.
    pub record_every: Option<usize>,
    /// Largest central block whose entropy is recorded.
    pub block_max: usize,
    /// Variational fitting sweeps after every SVD compression.
    pub fit_sweeps: usize,
    /// Write wall-clock seconds to the trace; off keeps traces reproducible.
    pub timing: bool,
    /// Stop an order once its accumulated discarded weight exceeds this.
    pub abort_discarded: Option<f64>,
    /// Once a state's bonds all sit at their caps, replace SVD compression by
    /// this many one-site fitting sweeps at fixed bond dimension, warm-started
    /// from the previous state. Zero keeps SVD compression throughout.
    pub fixed_bond_sweeps: usize,
}

impl Default for FilterOpts {
    fn default() -> Self {
        Self {
            trunc: Truncation::new(256, 0.0),
            record_every: None,
            block_max: 4,
            fit_sweeps: 0,
            timing: false,
            abort_discarded: None,
            fixed_bond_sweeps: 0,
        }
    }
}

pub const BLOCK_COLUMNS: usize = 10;
pub const D_TR_EPSILON: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub energy: f64,
    pub variance: f64,
    pub s_half: f64,
    /// Central-block entropies for `L_c = 1..=10`; `None` where not computed.
    pub s_block: Vec<Option<f64>>,
    pub max_bond: usize,
    pub discarded: f64,
    pub d_tr: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FilterTrace {
    pub rows: Vec<TraceRow>,
    /// Human-readable warnings, e.g. variance jumps from truncation.
    pub flags: Vec<String>,
}

impl FilterTrace {
    pub const HEADER: &'static str = "step,energy,variance,S_half,S_block_1,S_block_2,S_block_3,S_block_4,S_block_5,S_block_6,S_block_7,S_block_8,S_block_9,S_block_10,max_bond,discarded,d_tr,seconds";

    pub fn push(&mut self, row: TraceRow) {
        if let Some(prev) = self.rows.last() {
            if prev.variance > 0.0 && row.variance > 10.0 * prev.variance {
                self.flags.push(format!(
                    "variance grew from {:e} to {:e} between steps {} and {}: truncation dominated",
                    prev.variance, row.variance, prev.step, row.step
                ));
            }
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// CSV with the fixed column set; floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::HEADER.split(','))?;
        for r in &self.rows {
            let mut rec = vec![
                r.step.to_string(),
                r.energy.to_string(),
                r.variance.to_string(),
                r.s_half.to_string(),
            ];
            for k in 0..BLOCK_COLUMNS {
                rec.push(r.s_block.get(k).copied().flatten().map(|x| x.to_string()).unwrap_or_default());
            }
            rec.push(r.max_bond.to_string());
            rec.push(r.discarded.to_string());
            rec.push(r.d_tr.to_string());
            rec.push(r.seconds.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut trace = FilterTrace::default();
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Format(format!("bad float {s:?}: {e}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| Error::Format(format!("bad integer {s:?}: {e}")))
        };
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 18 {
                return Err(Error::Format(format!("expected 18 columns, got {}", rec.len())));
            }
            let s_block = (0..BLOCK_COLUMNS)
                .map(|k| {
                    let s = &rec[4 + k];
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        parse_f(s).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            trace.rows.push(TraceRow {
                step: parse_u(&rec[0])?,
                energy: parse_f(&rec[1])?,
                variance: parse_f(&rec[2])?,
                s_half: parse_f(&rec[3])?,
                s_block,
                max_bond: parse_u(&rec[14])?,
                discarded: parse_f(&rec[15])?,
                d_tr: parse_u(&rec[16])?,
                seconds: parse_f(&rec[17])?,
            });
        }
        Ok(trace)
    }
}

/// Diagnostics of a normalized state (moves its canonical center).
pub fn observe(
    state: &mut Mps,
    model: &Model,
    block_max: usize,
) -> Result<(f64, f64, SchmidtSpectrum, Vec<Option<f64>>)> {
    let n = state.len();
    let energy = state.expectation(&model.mpo)?.re;
    let variance = state.expectation2(&model.mpo)? - energy * energy;
    let half = state.schmidt(n / 2)?;
    let mut blocks = vec![None; BLOCK_COLUMNS];
    for (l, slot) in blocks.iter_mut().enumerate().take(block_max.min(BLOCK_COLUMNS).min(n)) {
        let len = l + 1;
        let first = (n - len) / 2;
        *slot = Some(state.rdm(first, len)?.entropy()?);
    }
    Ok((energy, variance, half, blocks))
}

/// Result of one filter order.
#[derive(Clone, Debug)]
pub struct FilterRun {
    pub order: usize,
    /// Normalized output state (`None` if the run was aborted).
    pub state: Option<Mps>,
    pub trace: FilterTrace,
    /// Accumulated discarded weight of the recurrence plus the sum.
    pub discarded: f64,
    /// False when the run stopped at the discarded-weight limit.
    pub completed: bool,
}

pub fn record_interval(m: usize, opts: &FilterOpts) -> usize {
    opts.record_every.unwrap_or_else(|| m.div_ceil(50)).max(1)
}

fn compress(s: &mut Mps, opts: &FilterOpts) -> Result<f64> {
    if opts.fit_sweeps > 0 {
        let (w, fid) = s.compress_fitted(opts.trunc, opts.fit_sweeps)?;
        Ok(if w > 0.0 { (1.0 - fid).max(0.0) } else { w })
    } else {
        s.compress(opts.trunc)
    }
}

const FIT_TOL: f64 = 1e-10;

/// Every bond at `min(d^i, d^(N-i), d_max)`.
fn saturated(s: &Mps, d_max: usize) -> bool {
    let n = s.len();
    let d = s.phys_dim() as f64;
    let bonds = s.bond_dims();
    (1..n).all(|i| bonds[i] as f64 >= d.powf(i.min(n - i) as f64).min(d_max as f64))
}

fn use_fit(s: &Mps, opts: &FilterOpts) -> bool {
    opts.fixed_bond_sweeps > 0 && saturated(s, opts.trunc.d_max)
}

/// `Ψ_M = Σ_n c_n T_n(H̃)|p>`, normalized.
pub fn cheby_filter(p: &Mps, setup: &FilterSetup, m: usize, opts: &FilterOpts) -> Result<FilterRun> {
    let mut runs = cheby_filter_orders(p, setup, &[m], opts)?;
    Ok(runs.remove(0))
}

struct OrderState {
    order: usize,
    coeffs: KernelCoefficients,
    sum: Mps,
    discarded_sum: f64,
    trace: FilterTrace,
    every: usize,
    done: bool,
    aborted: bool,
    /// Accumulated discarded weight when the run was stopped.
    abort_weight: f64,
}

/// Several orders sharing one Chebyshev recurrence. Each order keeps its own
/// running sum, compressed after every addition; `T_n` is compressed every
/// step. Returns runs in the order of `orders`.
pub fn cheby_filter_orders(
    p: &Mps,
    setup: &FilterSetup,
    orders: &[usize],
    opts: &FilterOpts,
) -> Result<Vec<FilterRun>> {
    opts.trunc.validate()?;
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no filter orders given".into()));
    }
    if setup.h_tilde.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: setup.h_tilde.len(),
            right: p.len(),
        });
    }
    let start = Instant::now();
    let mut p0 = p.clone();
    p0.normalize()?;
    let model = &setup.model;
    let m_max = *orders.iter().max().expect("nonempty");

    let mut states: Vec<OrderState> = orders
        .iter()
        .map(|&m| {
            let coeffs = delta_coefficients(m);
            let mut sum = p0.clone();
            sum.scale(C64::new(coeffs.c[0], 0.0));
            OrderState {
                order: m,
                coeffs,
                sum,
                discarded_sum: 0.0,
                trace: FilterTrace::default(),
                every: record_interval(m, opts),
                done: false,
                aborted: false,
                abort_weight: 0.0,
            }
        })
        .collect();

    let seconds = |t: &Instant| if opts.timing { t.elapsed().as_secs_f64() } else { 0.0 };
    let record = |st: &mut OrderState, step: usize, rec_disc: f64| -> Result<()> {
        let mut s = st.sum.clone();
        s.normalize()?;
        let (energy, variance, half, blocks) = observe(&mut s, model, opts.block_max)?;
        st.trace.push(TraceRow {
            step,
            energy,
            variance,
            s_half: half.entropy(),
            s_block: blocks,
            max_bond: s.max_bond(),
            discarded: rec_disc + st.discarded_sum,
            d_tr: crate::analysis::d_tr(&half, D_TR_EPSILON),
            seconds: seconds(&start),
        });
        Ok(())
    };

    for st in states.iter_mut().filter(|s| s.order == 0) {
        record(st, 0, 0.0)?;
        st.done = true;
    }

    // recurrence discarded weight accumulated up to T_n
    let mut rec_disc = 0.0;
    let mut t_prev = p0.clone();
    let mut t_cur = p0.clone();
    for n in 1..=m_max {
        if states.iter().all(|s| s.done) {
            break;
        }
        // T_n from T_{n-1}, T_{n-2}
        let next = if n == 1 {
            let mut t = Mps::apply_mpo_exact(&setup.h_tilde, &p0)?;
            rec_disc += compress(&mut t, opts)?;
            t
        } else if use_fit(&t_cur, opts) {
            let mut t = t_cur.clone();
            rec_disc += t.fit_combination(
                &[
                    (C64::new(2.0, 0.0), Some(&setup.h_tilde), &t_cur),
                    (C64::new(-1.0, 0.0), None, &t_prev),
                ],
                opts.fixed_bond_sweeps,
                FIT_TOL,
            )?;
            t
        } else {
            let mut ht = Mps::apply_mpo_exact(&setup.h_tilde, &t_cur)?;
            rec_disc += compress(&mut ht, opts)?;
            let mut t = Mps::direct_sum(&[(C64::new(2.0, 0.0), &ht), (C64::new(-1.0, 0.0), &t_prev)])?;
            rec_disc += compress(&mut t, opts)?;
            t
        };
        t_prev = std::mem::replace(&mut t_cur, next);

        for st in states.iter_mut().filter(|s| !s.done) {
            let c = st.coeffs.c[n];
            if c != 0.0 && use_fit(&st.sum, opts) {
                let mut sum = st.sum.clone();
                st.discarded_sum += sum.fit_combination(
                    &[(C64::new(1.0, 0.0), None, &st.sum), (C64::new(c, 0.0), None, &t_cur)],
                    opts.fixed_bond_sweeps,
                    FIT_TOL,
                )?;
                st.sum = sum;
            } else if c != 0.0 {
                let mut sum = Mps::direct_sum(&[(C64::new(1.0, 0.0), &st.sum), (C64::new(c, 0.0), &t_cur)])?;
                st.discarded_sum += compress(&mut sum, opts)?;
                st.sum = sum;
            }
            let total = rec_disc + st.discarded_sum;
            if let Some(limit) = opts.abort_discarded {
                if total > limit {
                    st.trace.flags.push(format!(
                        "stopped at step {n}: accumulated discarded weight {total:e} exceeds {limit:e}"
                    ));
                    st.done = true;
                    st.aborted = true;
                    st.abort_weight = total;
                    continue;
                }
            }
            if n == st.order || n % st.every == 0 {
                record(st, n, rec_disc)?;
            }
            if n == st.order {
                st.done = true;
            }
        }
        log::debug!(
            "step {n}: bond {} discarded {rec_disc:e} ({:.1}s)",
            t_cur.max_bond(),
            start.elapsed().as_secs_f64()
        );
    }

    states
        .into_iter()
        .map(|st| {
            let discarded = if st.aborted {
                st.abort_weight
            } else {
                st.trace.last().map(|r| r.discarded).unwrap_or(st.discarded_sum)
            };
            let state = if st.aborted {
                None
            } else {
                let mut s = st.sum;
                s.normalize()?;
                Some(s)
            };
            Ok(FilterRun {
                order: st.order,
                state,
                trace: st.trace,
                discarded,
                completed: !st.aborted,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackson_endpoints() {
        for m in [1, 2, 3, 10, 200, 1001] {
            assert!((jackson(0, m).unwrap() - 1.0).abs() < 1e-12);
            assert!(jackson(m, m).unwrap().abs() < 1e-12);
        }
        assert!(jackson(0, 0).unwrap() == 1.0);
        assert!(jackson(4, 3).is_err());
    }

    #[test]
    fn jackson_hand_value() {
        // (3 cos(π/4) + sin(π/4) cot(π/4)) / 4 = 4 (√2/2) / 4
        assert!((jackson(1, 3).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn jackson_decreasing() {
        let g: Vec<f64> = (0..=50).map(|k| jackson(k, 50).unwrap()).collect();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coefficients_structure() {
        let k = delta_coefficients(7);
        assert!((k.c[0] - 1.0 / PI).abs() < 1e-15);
        assert!(k.c.iter().skip(1).step_by(2).all(|&c| c == 0.0));
        assert_eq!(k.c.len(), 8);
        assert!(k.c[2] < 0.0 && k.c[4] > 0.0);
    }

    #[test]
    fn series_is_gaussian_at_peak() {
        let m = 200;
        let k = delta_coefficients(m);
        let sigma = envelope_sigma(m).unwrap();
        // normalized Gaussian of width π/M
        let gauss = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
        let peak = k.eval(0.0);
        assert!((peak - gauss(0.0)).abs() / gauss(0.0) < 0.05);
        let mut worst: f64 = 0.0;
        for i in 0..1001 {
            let x = -0.99 + 1.98 * i as f64 / 1000.0;
            worst = worst.max((k.eval(x) - gauss(x)).abs());
        }
        assert!(worst / gauss(0.0) < 0.05);
        assert!(k.eval(0.5).abs() < 1e-6 * peak);
        assert!(k.eval(-0.5).abs() < 1e-6 * peak);
    }

    #[test]
    fn series_is_even() {
        let k = delta_coefficients(51);
        for x in [0.1, 0.33, 0.8] {
            assert!((k.eval(x) - k.eval(-x)).abs() < 1e-12 * k.eval(x).abs().max(1.0));
        }
    }

    #[test]
    fn best_fit_width_near_envelope() {
        let m = 200;
        let k = delta_coefficients(m);
        let peak = k.eval(0.0);
        // width from the curvature-free half-maximum point
        let mut lo = 0.0;
        let mut hi = 0.1;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if k.eval(mid) > 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sigma_fit = lo / (2.0 * 2f64.ln()).sqrt();
        let sigma = envelope_sigma(m).unwrap();
        assert!((sigma_fit - sigma).abs() / sigma < 0.15);
    }

    #[test]
    fn envelope_values() {
        assert!((envelope_sigma(100).unwrap() - 0.031416).abs() < 1e-6);
        assert!((envelope_sigma(1).unwrap() - PI).abs() < 1e-15);
        assert!(envelope_sigma(0).is_err());
    }

    #[test]
    fn predicted_deltas() {
        assert!((predicted_delta_cheby_limit(100, 1000) - 0.22214).abs() < 1e-5);
        assert!((predicted_delta_cos(100, 10_000) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        let big = predicted_delta_cheby(100, 1000, 1e12);
        assert!((big - predicted_delta_cheby_limit(100, 1000)).abs() < 1e-12);
        let big = predicted_delta_cos_full(100, 10_000, 1e12);
        assert!((big - predicted_delta_cos(100, 10_000)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = FilterTrace::default();
        t.push(TraceRow {
            step: 3,
            energy: -1e-17,
            variance: 0.25,
            s_half: 1.5,
            s_block: vec![Some(0.5), Some(1.0), None, None, None, None, None, None, None, None],
            max_bond: 16,
            discarded: 1e-9,
            d_tr: 4,
            seconds: 0.0,
        });
        t.push(TraceRow {
            step: 6,
            energy: 0.1,
            variance: 3.0,
            s_half: 1.0,
            s_block: vec![None; 10],
            max_bond: 16,
            discarded: 2e-9,
            d_tr: 4,
            seconds: 0.0,
        });
        assert_eq!(t.flags.len(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(FilterTrace::HEADER));
        let back = FilterTrace::read_csv(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
