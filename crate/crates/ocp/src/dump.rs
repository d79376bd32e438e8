//! Plain-text dump of an [`OcpQp`] for offline inspection.
//!
//! ```text
//! ocp_qp horizon <N>
//! matrix x0 <rows> 1
//! <row values...>
//! stage <k>
//! matrix Q <rows> <cols>
//! ...
//! terminal
//! matrix Q <rows> <cols>
//! ...
//! ```
//!
//! Every matrix is introduced by `matrix <name> <rows> <cols>` followed by one
//! line per row with space-separated values in `{:e}` notation. Vectors are
//! written as single-column matrices. Unbounded entries print as `inf`/`-inf`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::problem::{OcpQp, SoftBounds};

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> io::Result<()> {
    writeln!(w, "matrix {name} {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, name: &str, v: &DVector<f64>) -> io::Result<()> {
    writeln!(w, "matrix {name} {} 1", v.len())?;
    for x in v.iter() {
        writeln!(w, "{x:e}")?;
    }
    Ok(())
}

fn write_bounds<W: Write>(w: &mut W, b: &SoftBounds) -> io::Result<()> {
    write_matrix(w, "C", &b.cx)?;
    write_matrix(w, "D", &b.du)?;
    write_vector(w, "lb", &b.lower)?;
    write_vector(w, "ub", &b.upper)?;
    write_vector(w, "Zl", &b.z_lower)?;
    write_vector(w, "Zu", &b.z_upper)
}

pub fn write_text<W: Write>(qp: &OcpQp, w: &mut W) -> io::Result<()> {
    writeln!(w, "ocp_qp horizon {}", qp.horizon())?;
    write_vector(w, "x0", &qp.x0)?;
    for (k, st) in qp.stages.iter().enumerate() {
        writeln!(w, "stage {k}")?;
        write_matrix(w, "Q", &st.q)?;
        write_matrix(w, "S", &st.s)?;
        write_matrix(w, "R", &st.r)?;
        write_vector(w, "q", &st.q_lin)?;
        write_vector(w, "r", &st.r_lin)?;
        write_matrix(w, "A", &st.a)?;
        write_matrix(w, "B", &st.b)?;
        write_vector(w, "b", &st.b_aff)?;
        write_bounds(w, &st.bounds)?;
    }
    writeln!(w, "terminal")?;
    write_matrix(w, "Q", &qp.terminal.q)?;
    write_vector(w, "q", &qp.terminal.q_lin)?;
    write_bounds(w, &qp.terminal.bounds)
}

pub fn to_text(qp: &OcpQp) -> String {
    let mut buf = Vec::new();
    write_text(qp, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("dump is ASCII")
}
