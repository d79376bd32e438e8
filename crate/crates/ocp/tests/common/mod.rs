//! Test-only oracles: dense KKT assembly for the full OCP, enumeration over
//! bound patterns, and random instance generation.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use payload_ocp::{OcpQp, OcpStage, SoftBounds, TerminalStage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Layout of the dense decision vector `[u_0 .. u_{N-1}, x_1 .. x_N]`.
pub struct Layout {
    pub u_off: Vec<usize>,
    pub x_off: Vec<usize>,
    pub len: usize,
}

impl Layout {
    pub fn new(qp: &OcpQp) -> Self {
        let mut off = 0;
        let mut u_off = Vec::new();
        for st in &qp.stages {
            u_off.push(off);
            off += st.nu();
        }
        let mut x_off = vec![usize::MAX];
        for st in &qp.stages {
            x_off.push(off);
            off += st.nx_next();
        }
        Self { u_off, x_off, len: off }
    }
}

/// A constraint row expressed on the dense decision vector: `coef' w + shift`.
pub struct DenseRow {
    pub coef: DVector<f64>,
    pub shift: f64,
    pub lower: f64,
    pub upper: f64,
    pub z_lower: f64,
    pub z_upper: f64,
}

pub struct Dense {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub rows: Vec<DenseRow>,
    pub layout: Layout,
}

/// Places the stage variables `(x_k, u_k)` into the dense vector. For `k = 0`
/// the state is the fixed `x0` and enters as a constant.
fn stage_selector(qp: &OcpQp, lay: &Layout, k: usize, nx: usize, nu: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut sel = DMatrix::zeros(nx + nu, lay.len);
    let mut cst = DVector::zeros(nx + nu);
    if k == 0 {
        cst.rows_mut(0, nx).copy_from(&qp.x0);
    } else {
        for i in 0..nx {
            sel[(i, lay.x_off[k] + i)] = 1.0;
        }
    }
    if nu > 0 {
        for j in 0..nu {
            sel[(nx + j, lay.u_off[k] + j)] = 1.0;
        }
    }
    (sel, cst)
}

pub fn assemble(qp: &OcpQp) -> Dense {
    let lay = Layout::new(qp);
    let nw = lay.len;
    let n = qp.horizon();
    let mut h = DMatrix::zeros(nw, nw);
    let mut g = DVector::zeros(nw);
    let neq: usize = qp.stages.iter().map(|s| s.nx_next()).sum();
    let mut eq = DMatrix::zeros(neq, nw);
    let mut eq_rhs = DVector::zeros(neq);
    let mut rows = Vec::new();
    let mut eq_row = 0;

    let push_rows = |b: &SoftBounds, m: &DMatrix<f64>, c: &DVector<f64>, rows: &mut Vec<DenseRow>| {
        let nx = b.cx.ncols();
        for i in 0..b.rows() {
            let mut cd = DVector::zeros(m.nrows());
            for j in 0..nx {
                cd[j] = b.cx[(i, j)];
            }
            for j in 0..b.du.ncols() {
                cd[nx + j] = b.du[(i, j)];
            }
            rows.push(DenseRow {
                coef: m.transpose() * &cd,
                shift: cd.dot(c),
                lower: b.lower[i],
                upper: b.upper[i],
                z_lower: b.z_lower[i],
                z_upper: b.z_upper[i],
            });
        }
    };

    for (k, st) in qp.stages.iter().enumerate() {
        let (nx, nu) = (st.nx(), st.nu());
        let (sel, cst) = stage_selector(qp, &lay, k, nx, nu);
        let mut hk = DMatrix::zeros(nx + nu, nx + nu);
        hk.view_mut((0, 0), (nx, nx)).copy_from(&st.q);
        hk.view_mut((nx, 0), (nu, nx)).copy_from(&st.s);
        hk.view_mut((0, nx), (nx, nu)).copy_from(&st.s.transpose());
        hk.view_mut((nx, nx), (nu, nu)).copy_from(&st.r);
        let mut gk = DVector::zeros(nx + nu);
        gk.rows_mut(0, nx).copy_from(&st.q_lin);
        gk.rows_mut(nx, nu).copy_from(&st.r_lin);
        h += sel.transpose() * &hk * &sel;
        g += sel.transpose() * (&hk * &cst + gk);
        push_rows(&st.bounds, &sel, &cst, &mut rows);

        // x_{k+1} - A x_k - B u_k = b
        let nxn = st.nx_next();
        let mut ab = DMatrix::zeros(nxn, nx + nu);
        ab.view_mut((0, 0), (nxn, nx)).copy_from(&st.a);
        ab.view_mut((0, nx), (nxn, nu)).copy_from(&st.b);
        let mut row = -(&ab * &sel);
        for i in 0..nxn {
            row[(i, lay.x_off[k + 1] + i)] += 1.0;
        }
        eq.view_mut((eq_row, 0), (nxn, nw)).copy_from(&row);
        eq_rhs.rows_mut(eq_row, nxn).copy_from(&(&ab * &cst + &st.b_aff));
        eq_row += nxn;
    }
    let t = &qp.terminal;
    let (sel, cst) = stage_selector(qp, &lay, n, t.nx(), 0);
    h += sel.transpose() * &t.q * &sel;
    g += sel.transpose() * (&t.q * &cst + &t.q_lin);
    push_rows(&t.bounds, &sel, &cst, &mut rows);

    Dense { h, g, eq, eq_rhs, rows, layout: lay }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Pattern {
    Free,
    AtLower,
    AtUpper,
}

/// Solves `min 0.5 w'Hw + g'w  s.t.  E w = e, extra_eq w = extra_rhs`.
pub fn kkt_solve(h: &DMatrix<f64>, g: &DVector<f64>, eq: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (nw, ne) = (h.nrows(), eq.nrows());
    let mut k = DMatrix::zeros(nw + ne, nw + ne);
    k.view_mut((0, 0), (nw, nw)).copy_from(h);
    k.view_mut((0, nw), (nw, ne)).copy_from(&eq.transpose());
    k.view_mut((nw, 0), (ne, nw)).copy_from(eq);
    let mut b = DVector::zeros(nw + ne);
    b.rows_mut(0, nw).copy_from(&(-g));
    b.rows_mut(nw, ne).copy_from(rhs);
    let sol = k.lu().solve(&b)?;
    Some((sol.rows(0, nw).into_owned(), sol.rows(nw, ne).into_owned()))
}

/// Minimizer with the soft penalties of the given pattern added as quadratics.
pub fn soft_pattern_solve(d: &Dense, pat: &[Pattern]) -> Option<DVector<f64>> {
    let mut h = d.h.clone();
    let mut g = d.g.clone();
    for (row, p) in d.rows.iter().zip(pat) {
        let (z, target) = match p {
            Pattern::Free => continue,
            Pattern::AtLower => (row.z_lower, row.lower),
            Pattern::AtUpper => (row.z_upper, row.upper),
        };
        h += z * &row.coef * row.coef.transpose();
        g += z * (row.shift - target) * &row.coef;
    }
    kkt_solve(&h, &g, &d.eq, &d.eq_rhs).map(|(w, _)| w)
}

fn patterns(rows: usize) -> impl Iterator<Item = Vec<Pattern>> {
    let total = 3usize.pow(rows as u32);
    (0..total).map(move |mut code| {
        (0..rows)
            .map(|_| {
                let p = [Pattern::Free, Pattern::AtLower, Pattern::AtUpper][code % 3];
                code /= 3;
                p
            })
            .collect()
    })
}

/// Soft-constrained optimum by enumerating which bounds are violated.
pub fn soft_enumeration_oracle(qp: &OcpQp) -> DVector<f64> {
    let d = assemble(qp);
    for pat in patterns(d.rows.len()) {
        if pat.iter().zip(&d.rows).any(|(p, r)| match p {
            Pattern::AtLower => !r.lower.is_finite() || r.z_lower == 0.0,
            Pattern::AtUpper => !r.upper.is_finite() || r.z_upper == 0.0,
            Pattern::Free => false,
        }) {
            continue;
        }
        let Some(w) = soft_pattern_solve(&d, &pat) else { continue };
        let consistent = pat.iter().zip(&d.rows).all(|(p, r)| {
            let v = r.coef.dot(&w) + r.shift;
            let tol = 1e-10 * (1.0 + v.abs());
            match p {
                Pattern::Free => (v <= r.upper + tol || r.z_upper == 0.0) && (v >= r.lower - tol || r.z_lower == 0.0),
                Pattern::AtLower => v <= r.lower + tol,
                Pattern::AtUpper => v >= r.upper - tol,
            }
        });
        if consistent {
            return w;
        }
    }
    panic!("no consistent bound pattern");
}

/// Hard-constrained optimum by enumerating active sets and checking primal
/// feasibility and multiplier signs. `None` when the hard problem is
/// infeasible.
pub fn hard_enumeration_oracle(qp: &OcpQp) -> Option<DVector<f64>> {
    let d = assemble(qp);
    for pat in patterns(d.rows.len()) {
        let mut extra = Vec::new();
        for (p, r) in pat.iter().zip(&d.rows) {
            match p {
                Pattern::Free => {}
                Pattern::AtLower if r.lower.is_finite() => extra.push((r, r.lower, -1.0)),
                Pattern::AtUpper if r.upper.is_finite() => extra.push((r, r.upper, 1.0)),
                _ => extra.push((r, f64::NAN, 0.0)),
            }
        }
        if extra.iter().any(|e| e.1.is_nan()) {
            continue;
        }
        let ne = d.eq.nrows();
        let mut eq = DMatrix::zeros(ne + extra.len(), d.layout.len);
        let mut rhs = DVector::zeros(ne + extra.len());
        eq.view_mut((0, 0), (ne, d.layout.len)).copy_from(&d.eq);
        rhs.rows_mut(0, ne).copy_from(&d.eq_rhs);
        for (i, (r, bound, _)) in extra.iter().enumerate() {
            eq.set_row(ne + i, &r.coef.transpose());
            rhs[ne + i] = bound - r.shift;
        }
        let Some((w, lam)) = kkt_solve(&d.h, &d.g, &eq, &rhs) else { continue };
        // H w + g + E' lam = 0, so the inequality multiplier of an upper
        // bound is lam and of a lower bound is -lam; both must be >= 0.
        let signs_ok = extra.iter().enumerate().all(|(i, (_, _, sgn))| sgn * lam[ne + i] >= -1e-9);
        let feasible = d.rows.iter().all(|r| {
            let v = r.coef.dot(&w) + r.shift;
            v <= r.upper + 1e-9 && v >= r.lower - 1e-9
        });
        if signs_ok && feasible {
            return Some(w);
        }
    }
    None
}

/// Unconstrained (bounds ignored) optimum from one dense KKT solve.
pub fn dense_oracle(qp: &OcpQp) -> DVector<f64> {
    let d = assemble(qp);
    kkt_solve(&d.h, &d.g, &d.eq, &d.eq_rhs).expect("KKT matrix is nonsingular").0
}

/// Flattens a solver trajectory into the dense layout.
pub fn flatten(qp: &OcpQp, xs: &[DVector<f64>], us: &[DVector<f64>]) -> DVector<f64> {
    let lay = Layout::new(qp);
    let mut w = DVector::zeros(lay.len);
    for k in 0..qp.horizon() {
        w.rows_mut(lay.u_off[k], us[k].len()).copy_from(&us[k]);
        w.rows_mut(lay.x_off[k + 1], xs[k + 1].len()).copy_from(&xs[k + 1]);
    }
    w
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn rand_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let l = rand_mat(rng, n, n, 1.0);
    &l * l.transpose() + shift * DMatrix::identity(n, n)
}

/// Random strictly convex OCP. `bounded_rows` random stages get one soft
/// two-sided bound on a random state component.
pub fn random_instance(seed: u64, max_n: usize, bounded_rows: usize, z: f64) -> OcpQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.random_range(1..=4);
    let nu = rng.random_range(1..=3);
    let n = rng.random_range(1..=max_n);
    let mut stages = Vec::with_capacity(n);
    for _ in 0..n {
        let hess = rand_pd(&mut rng, nx + nu, 0.2);
        let mut st = OcpStage::new(
            hess.view((0, 0), (nx, nx)).into_owned(),
            hess.view((nx, nx), (nu, nu)).into_owned(),
            rand_vec(&mut rng, nx, 1.0),
            rand_mat(&mut rng, nx, nx, 0.6),
            rand_mat(&mut rng, nx, nu, 1.0),
        );
        st.s = hess.view((nx, 0), (nu, nx)).into_owned();
        st.r_lin = rand_vec(&mut rng, nu, 1.0);
        st.b_aff = rand_vec(&mut rng, nx, 0.3);
        stages.push(st);
    }
    let mut qp = OcpQp {
        x0: rand_vec(&mut rng, nx, 2.0),
        stages,
        terminal: TerminalStage::new(rand_pd(&mut rng, nx, 0.2), rand_vec(&mut rng, nx, 1.0)),
    };
    for _ in 0..bounded_rows {
        let k = rng.random_range(0..=n);
        let i = rng.random_range(0..nx);
        let half = rng.random_range(0.05..0.5);
        let center = rng.random_range(-0.3..0.3);
        let mut lo = vec![f64::NEG_INFINITY; nx];
        let mut hi = vec![f64::INFINITY; nx];
        lo[i] = center - half;
        hi[i] = center + half;
        let zs = vec![z; nx];
        if k == n {
            let extra = SoftBounds::boxed(nx, 0, &lo, &hi, &zs, &zs).unwrap();
            append(&mut qp.terminal.bounds, extra);
        } else {
            let mut lo_full = vec![f64::NEG_INFINITY; nu];
            lo_full.extend(&lo);
            let mut hi_full = vec![f64::INFINITY; nu];
            hi_full.extend(&hi);
            let zs = vec![z; nu + nx];
            let extra = SoftBounds::boxed(nx, nu, &lo_full, &hi_full, &zs, &zs).unwrap();
            append(&mut qp.stages[k].bounds, extra);
        }
    }
    qp
}

fn append(dst: &mut SoftBounds, extra: SoftBounds) {
    let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
        m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
        m.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
        m
    };
    let vstack = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
    *dst = SoftBounds {
        cx: stack(&dst.cx, &extra.cx),
        du: stack(&dst.du, &extra.du),
        lower: vstack(&dst.lower, &extra.lower),
        upper: vstack(&dst.upper, &extra.upper),
        z_lower: vstack(&dst.z_lower, &extra.z_lower),
        z_upper: vstack(&dst.z_upper, &extra.z_upper),
    };
}
