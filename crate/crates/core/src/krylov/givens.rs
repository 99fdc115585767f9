/// Incrementally triangularized least-squares problem
/// `min_y || beta e_1 - H y ||_2` for an extended Hessenberg `H`.
///
/// Each new column is hit with all previous rotations and one new rotation,
/// so the current residual norm is always `|g_{j+1}|`.
#[derive(Debug, Clone)]
pub struct GivensLeastSquares {
    r: Vec<Vec<f64>>,
    rotations: Vec<(f64, f64)>,
    g: Vec<f64>,
    rank_deficient: bool,
}

impl GivensLeastSquares {
    pub fn new(beta: f64) -> Self {
        Self {
            r: Vec::new(),
            rotations: Vec::new(),
            g: vec![beta],
            rank_deficient: false,
        }
    }

    pub fn columns(&self) -> usize {
        self.r.len()
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn residual_norm(&self) -> f64 {
        self.g.last().map_or(0.0, |g| g.abs())
    }

    /// Adds column `j` (length `j + 2`) and returns the updated residual norm.
    pub fn push_column(&mut self, h: &[f64]) -> f64 {
        let j = self.r.len();
        assert_eq!(h.len(), j + 2, "column {j} must have {} entries", j + 2);
        let mut col = h.to_vec();
        for (i, &(c, s)) in self.rotations.iter().enumerate() {
            let (a, b) = (col[i], col[i + 1]);
            col[i] = c * a + s * b;
            col[i + 1] = -s * a + c * b;
        }
        let (a, b) = (col[j], col[j + 1]);
        let (c, s) = if a == 0.0 && b == 0.0 {
            // Zero column: swap so the unreduced rhs component lands in the
            // residual slot and y_j is forced to zero.
            (0.0, 1.0)
        } else if b == 0.0 {
            (1.0, 0.0)
        } else {
            let rho = a.hypot(b);
            (a / rho, b / rho)
        };
        col[j] = c * a + s * b;
        col.truncate(j + 1);
        if col[j] == 0.0 {
            self.rank_deficient = true;
        }
        let gj = self.g[j];
        self.g[j] = c * gj;
        self.g.push(-s * gj);
        self.rotations.push((c, s));
        self.r.push(col);
        self.residual_norm()
    }

    /// Back substitution on the triangular factor. A zero diagonal entry
    /// (rank deficiency) sets the matching component to zero.
    pub fn solve(&self) -> Vec<f64> {
        let m = self.r.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = self.g[i];
            for k in i + 1..m {
                acc -= self.r[k][i] * y[k];
            }
            let d = self.r[i][i];
            y[i] = if d == 0.0 { 0.0 } else { acc / d };
        }
        y
    }
}

/// Solves `min || beta e_1 - H y ||` for the dense `(j+1) x j` matrix `hbar`
/// and returns `(y, residual_norm)`.
pub fn solve_hessenberg_ls(hbar: &[Vec<f64>], beta: f64) -> (Vec<f64>, f64) {
    let cols = hbar.first().map_or(0, Vec::len);
    let mut ls = GivensLeastSquares::new(beta);
    for j in 0..cols {
        let col: Vec<f64> = (0..j + 2).map(|i| hbar[i][j]).collect();
        ls.push_column(&col);
    }
    (ls.solve(), ls.residual_norm())
}
