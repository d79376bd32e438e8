//! Partial condensing: groups consecutive stages into blocks whose input is
//! the stacked inputs of the block and whose state is the state at the start
//! of the block. Intermediate states are eliminated through the dynamics, so
//! their costs and bounds become dense terms of the block.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::problem::{OcpQp, OcpStage, SoftBounds};

#[derive(Clone, Debug)]
pub struct CondensedMap {
    /// Original stage indices covered by each block.
    pub blocks: Vec<Range<usize>>,
}

/// Condenses `qp` into blocks of at most `block` stages. A block size of at
/// least the horizon yields the fully condensed (single stage) problem.
pub fn condense(qp: &OcpQp, block: usize) -> (OcpQp, CondensedMap) {
    let n = qp.horizon();
    let block = block.max(1);
    let blocks: Vec<Range<usize>> = (0..n).step_by(block).map(|k| k..(k + block).min(n)).collect();
    let stages = blocks.iter().map(|r| condense_block(qp, r.clone())).collect();
    (
        OcpQp { x0: qp.x0.clone(), stages, terminal: qp.terminal.clone() },
        CondensedMap { blocks },
    )
}

fn condense_block(qp: &OcpQp, range: Range<usize>) -> OcpStage {
    let first = &qp.stages[range.start];
    let nx = first.nx();
    let nu_total: usize = range.clone().map(|k| qp.stages[k].nu()).sum();
    let nz = nx + nu_total;
    let nc_total: usize = range.clone().map(|k| qp.stages[k].bounds.rows()).sum();

    let mut hess = DMatrix::<f64>::zeros(nz, nz);
    let mut grad = DVector::<f64>::zeros(nz);
    let mut cons = DMatrix::<f64>::zeros(nc_total, nz);
    let mut lower = DVector::zeros(nc_total);
    let mut upper = DVector::zeros(nc_total);
    let mut z_lower = DVector::zeros(nc_total);
    let mut z_upper = DVector::zeros(nc_total);

    // x_i = phi * x_start + gamma * U + c
    let mut phi = DMatrix::<f64>::identity(nx, nx);
    let mut gamma = DMatrix::<f64>::zeros(nx, nu_total);
    let mut offset = DVector::<f64>::zeros(nx);
    let mut u_col = 0;
    let mut row = 0;

    for k in range {
        let st = &qp.stages[k];
        let (nxk, nuk) = (st.nx(), st.nu());
        // Maps block variables (x_start, U) to the stage variables (x_k, u_k).
        let mut map = DMatrix::<f64>::zeros(nxk + nuk, nz);
        map.view_mut((0, 0), (nxk, nx)).copy_from(&phi);
        map.view_mut((0, nx), (nxk, nu_total)).copy_from(&gamma);
        for j in 0..nuk {
            map[(nxk + j, nx + u_col + j)] = 1.0;
        }
        let mut stage_off = DVector::zeros(nxk + nuk);
        stage_off.rows_mut(0, nxk).copy_from(&offset);

        let mut h = DMatrix::<f64>::zeros(nxk + nuk, nxk + nuk);
        h.view_mut((0, 0), (nxk, nxk)).copy_from(&st.q);
        h.view_mut((nxk, 0), (nuk, nxk)).copy_from(&st.s);
        h.view_mut((0, nxk), (nxk, nuk)).copy_from(&st.s.transpose());
        h.view_mut((nxk, nxk), (nuk, nuk)).copy_from(&st.r);
        let mut g = DVector::zeros(nxk + nuk);
        g.rows_mut(0, nxk).copy_from(&st.q_lin);
        g.rows_mut(nxk, nuk).copy_from(&st.r_lin);

        hess += map.transpose() * &h * &map;
        grad += map.transpose() * (&h * &stage_off + g);

        let b = &st.bounds;
        let nc = b.rows();
        if nc > 0 {
            let mut cd = DMatrix::zeros(nc, nxk + nuk);
            cd.view_mut((0, 0), (nc, nxk)).copy_from(&b.cx);
            cd.view_mut((0, nxk), (nc, nuk)).copy_from(&b.du);
            cons.view_mut((row, 0), (nc, nz)).copy_from(&(&cd * &map));
            let shift = &cd * &stage_off;
            for i in 0..nc {
                lower[row + i] = b.lower[i] - shift[i];
                upper[row + i] = b.upper[i] - shift[i];
                z_lower[row + i] = b.z_lower[i];
                z_upper[row + i] = b.z_upper[i];
            }
            row += nc;
        }

        let mut b_block = DMatrix::zeros(st.nx_next(), nu_total);
        b_block.view_mut((0, u_col), (st.nx_next(), nuk)).copy_from(&st.b);
        gamma = &st.a * &gamma + b_block;
        phi = &st.a * &phi;
        offset = &st.a * &offset + &st.b_aff;
        u_col += nuk;
    }

    let hess = 0.5 * (&hess + hess.transpose());
    OcpStage {
        q: hess.view((0, 0), (nx, nx)).into_owned(),
        s: hess.view((nx, 0), (nu_total, nx)).into_owned(),
        r: hess.view((nx, nx), (nu_total, nu_total)).into_owned(),
        q_lin: grad.rows(0, nx).into_owned(),
        r_lin: grad.rows(nx, nu_total).into_owned(),
        a: phi,
        b: gamma,
        b_aff: offset,
        bounds: SoftBounds {
            cx: cons.columns(0, nx).into_owned(),
            du: cons.columns(nx, nu_total).into_owned(),
            lower,
            upper,
            z_lower,
            z_upper,
        },
    }
}

/// Recovers the full trajectory from a solution of the condensed problem.
///
/// Inputs are unstacked from the block inputs and the states re-rolled from
/// `x0`, so the result is exactly consistent with the original dynamics.
pub fn expand(qp: &OcpQp, map: &CondensedMap, us_blocks: &[DVector<f64>]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut us = Vec::with_capacity(qp.horizon());
    for (j, range) in map.blocks.iter().enumerate() {
        let mut col = 0;
        for k in range.clone() {
            let nu = qp.stages[k].nu();
            us.push(us_blocks[j].rows(col, nu).into_owned());
            col += nu;
        }
    }
    let mut xs = Vec::with_capacity(qp.horizon() + 1);
    xs.push(qp.x0.clone());
    for (k, st) in qp.stages.iter().enumerate() {
        let next = st.step(&xs[k], &us[k]);
        xs.push(next);
    }
    (xs, us)
}
