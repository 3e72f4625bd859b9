//! Gate-list export of an isometric network.
//!
//! Every leaf is a qudit of dimension `d`, the least power of two at least
//! `max(N_l, V)`. A node's bond lives on the qudit of its leftmost leaf.
//! The gate of node `v` acts on `(t(v), t(right child))`: its input is
//! (bond, ancilla `|0⟩`) and its output is (left leg, right leg). Gates
//! are listed bottom-up; applying them in reverse order to the prepared
//! top qudit produces `|ψ⟩ / ‖ψ‖`.
//!
//! ```text
//! STNLM-CIRCUIT 1 <d> <qudits> <gates>
//! PREP <qudit> <d amplitudes>
//! ANCILLA <qudit> |0>
//! GATE2 <node> <qudit a> <qudit b> <d⁴ real entries, row-major>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{IsometricNetwork, SpectralError};

/// Largest qudit dimension accepted for export.
pub const MAX_QUDIT_DIM: usize = 32;

const HEADER: &str = "STNLM-CIRCUIT";
const UNITARITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub node: usize,
    pub a: usize,
    pub b: usize,
    /// `d² × d²`, indexed `(x_a · d + x_b)`.
    pub unitary: DMatrix<f64>,
}

impl Gate {
    /// `max |U†U − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let k = self.unitary.nrows();
        (self.unitary.transpose() * &self.unitary - DMatrix::<f64>::identity(k, k)).abs().max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub dim: usize,
    pub n_qudits: usize,
    pub prep_qudit: usize,
    pub prep: Vec<f64>,
    pub ancillas: Vec<usize>,
    /// Bottom-up order.
    pub gates: Vec<Gate>,
}

/// Completes orthonormal columns to an orthonormal basis of `R^dim` by
/// Gram–Schmidt against canonical vectors in index order.
fn complete_basis(cols: Vec<DVector<f64>>, dim: usize) -> Vec<DVector<f64>> {
    let mut basis = cols;
    let mut i = 0;
    while basis.len() < dim && i < dim {
        let mut v = DVector::<f64>::zeros(dim);
        v[i] = 1.0;
        for _ in 0..2 {
            for u in &basis {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        i += 1;
    }
    basis
}

fn gate_unitary(q: &DMatrix<f64>, left_dim: usize, right_dim: usize, d: usize) -> DMatrix<f64> {
    let dd = d * d;
    let k = q.ncols();
    let embedded: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut v = DVector::zeros(dd);
            for x in 0..left_dim {
                for y in 0..right_dim {
                    v[x * d + y] = q[(x * right_dim + y, c)];
                }
            }
            v
        })
        .collect();
    let basis = complete_basis(embedded, dd);
    let mut u = DMatrix::<f64>::zeros(dd, dd);
    // isometry columns sit at (bond c, ancilla 0); the rest fill remaining
    // columns in ascending order
    let mut free = (0..dd).filter(|col| col % d != 0 || col / d >= k);
    for (idx, v) in basis.iter().enumerate() {
        let col = if idx < k { idx * d } else { free.next().expect("enough columns") };
        u.set_column(col, v);
    }
    u
}

impl Circuit {
    pub fn from_network(net: &IsometricNetwork) -> Result<Self, SpectralError> {
        let d = net.n_categories.max(net.n_words).next_power_of_two();
        if d > MAX_QUDIT_DIM {
            return Err(SpectralError::CircuitTooLarge { dim: d, max: MAX_QUDIT_DIM });
        }
        let norm = net.omega_norm_sq().sqrt();
        if norm == 0.0 {
            return Err(SpectralError::ZeroPartition);
        }
        let sk = &net.skeleton;
        let carrier = |id: usize| sk.node(id).coord.t as usize;
        let mut prep = vec![0.0; d];
        for (p, &o) in prep.iter_mut().zip(&net.omega) {
            *p = o / norm;
        }
        let mut gates = Vec::new();
        let mut ancillas = Vec::new();
        for (id, node) in sk.nodes().iter().enumerate() {
            if let Some((_, r)) = node.children {
                let iso = net.isometries[id].as_ref().expect("internal");
                ancillas.push(carrier(r));
                gates.push(Gate {
                    node: id,
                    a: carrier(id),
                    b: carrier(r),
                    unitary: gate_unitary(&iso.q, iso.left_dim, iso.right_dim, d),
                });
            }
        }
        ancillas.sort_unstable();
        Ok(Circuit { dim: d, n_qudits: sk.n_leaves(), prep_qudit: carrier(sk.root()), prep, ancillas, gates })
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.gates.iter().map(Gate::unitarity_error).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER} 1 {} {} {}", self.dim, self.n_qudits, self.gates.len()).unwrap();
        write!(s, "PREP {}", self.prep_qudit).unwrap();
        for x in &self.prep {
            write!(s, " {x:.16e}").unwrap();
        }
        s.push('\n');
        for q in &self.ancillas {
            writeln!(s, "ANCILLA {q} |0>").unwrap();
        }
        for g in &self.gates {
            write!(s, "GATE2 {} {} {}", g.node, g.a, g.b).unwrap();
            for i in 0..g.unitary.nrows() {
                for j in 0..g.unitary.ncols() {
                    write!(s, " {:.16e}", g.unitary[(i, j)]).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Serialized circuit of `net`.
pub fn circuit_string(net: &IsometricNetwork) -> Result<String, SpectralError> {
    Ok(Circuit::from_network(net)?.to_text())
}

/// Writes the gate list of `net` to `path`.
pub fn export_circuit(net: &IsometricNetwork, path: impl AsRef<Path>) -> Result<Circuit, SpectralError> {
    let c = Circuit::from_network(net)?;
    std::fs::write(path, c.to_text()).map_err(|e| SpectralError::Io(e.to_string()))?;
    Ok(c)
}

fn bad(line: usize, reason: &str) -> SpectralError {
    SpectralError::Malformed { line, reason: reason.to_string() }
}

/// Parses a circuit and checks every gate for unitarity to 1e-10.
pub fn parse_circuit(text: &str) -> Result<Circuit, SpectralError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 || h[0] != HEADER || h[1] != "1" {
        return Err(bad(1, "bad header"));
    }
    let num = |s: &str, ln: usize| s.parse::<usize>().map_err(|_| bad(ln, "bad integer"));
    let (dim, n_qudits, n_gates) = (num(h[2], 1)?, num(h[3], 1)?, num(h[4], 1)?);
    let mut c = Circuit { dim, n_qudits, prep_qudit: 0, prep: Vec::new(), ancillas: Vec::new(), gates: Vec::new() };
    let dd = dim * dim;
    for (i, line) in lines {
        let ln = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        let floats = |xs: &[&str]| -> Result<Vec<f64>, SpectralError> {
            xs.iter().map(|x| x.parse::<f64>().map_err(|_| bad(ln, "bad number"))).collect()
        };
        match f.first().copied() {
            Some("PREP") if f.len() == 2 + dim => {
                c.prep_qudit = num(f[1], ln)?;
                c.prep = floats(&f[2..])?;
            }
            Some("ANCILLA") if f.len() == 3 && f[2] == "|0>" => c.ancillas.push(num(f[1], ln)?),
            Some("GATE2") if f.len() == 4 + dd * dd => {
                let entries = floats(&f[4..])?;
                let gate = Gate {
                    node: num(f[1], ln)?,
                    a: num(f[2], ln)?,
                    b: num(f[3], ln)?,
                    unitary: DMatrix::from_row_slice(dd, dd, &entries),
                };
                let error = gate.unitarity_error();
                if !(error <= UNITARITY_TOLERANCE) {
                    return Err(SpectralError::NotUnitary { node: gate.node, error });
                }
                c.gates.push(gate);
            }
            _ => return Err(bad(ln, "unrecognized line")),
        }
    }
    if c.gates.len() != n_gates || c.prep.is_empty() {
        return Err(bad(1, "gate count or prep line missing"));
    }
    Ok(c)
}

pub fn load_circuit(path: impl AsRef<Path>) -> Result<Circuit, SpectralError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpectralError::Io(e.to_string()))?;
    parse_circuit(&text)
}
