//! Discretely observed functional covariates and the design matrix of inner
//! products `N_i = ∫ x_i(t) N(t) dt`.
//!
//! Curves share one observation grid. Integrals against the basis use the
//! composite trapezoid rule on that grid with exact basis values at the grid
//! points.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spline::{penalty_matrix, KnotVector};

/// Observed curves `x_i(t_k)` with scalar responses.
///
/// With `M > 1` covariates, `values` holds `M` blocks of `T` columns each.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: Vec<f64>,
    values: DMatrix<f64>,
    response: Vec<f64>,
    covariate_count: usize,
}

impl CurveSet {
    pub fn new(
        grid: Vec<f64>,
        values: DMatrix<f64>,
        response: Vec<f64>,
        covariate_count: usize,
    ) -> Result<Self> {
        if covariate_count == 0 {
            return Err(Error::InvalidArgument(
                "covariate count must be positive".into(),
            ));
        }
        for (i, w) in grid.windows(2).enumerate() {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::NonMonotoneGrid(i + 1));
            }
        }
        if grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "grid contains non-finite values".into(),
            ));
        }
        if values.ncols() != grid.len() * covariate_count {
            return Err(Error::DimensionMismatch(format!(
                "values have {} columns, expected {} x {}",
                values.ncols(),
                covariate_count,
                grid.len()
            )));
        }
        if values.nrows() != response.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} curves but {} responses",
                values.nrows(),
                response.len()
            )));
        }
        if values.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite curve or response value".into(),
            ));
        }
        Ok(Self {
            grid,
            values,
            response,
            covariate_count,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_count
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Columns of covariate `m`.
    pub fn block(&self, m: usize) -> nalgebra::DMatrixView<'_, f64> {
        let t = self.grid.len();
        self.values.columns(m * t, t)
    }
}

/// Output of [`center`].
#[derive(Debug, Clone, PartialEq)]
pub struct Centered {
    pub curves: CurveSet,
    /// Pointwise mean, `M * T` values.
    pub mean_curve: Vec<f64>,
    pub mean_response: f64,
}

/// Subtracts the pointwise mean curve and the mean response.
pub fn center(cs: &CurveSet) -> Result<Centered> {
    let n = cs.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let mean_curve: Vec<f64> = cs
        .values
        .column_iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let mean_response = cs.response.iter().sum::<f64>() / n as f64;
    let mut values = cs.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean_curve[j]);
    }
    let response = cs.response.iter().map(|y| y - mean_response).collect();
    Ok(Centered {
        curves: CurveSet {
            grid: cs.grid.clone(),
            values,
            response,
            covariate_count: cs.covariate_count,
        },
        mean_curve,
        mean_response,
    })
}

/// Composite trapezoid weights on a strictly increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let t = grid.len();
    let mut w = vec![0.0; t];
    for k in 0..t.saturating_sub(1) {
        let h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// Basis attached to a column range of a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub offset: usize,
    pub knots: KnotVector,
}

/// The `n x d` matrix of basis inner products with its roughness penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub entries: DMatrix<f64>,
    pub intercept: bool,
    pub penalty: DMatrix<f64>,
    pub penalty_order: usize,
    pub blocks: Vec<BasisBlock>,
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    /// Wraps precomputed inner products for a single basis block.
    pub fn from_entries(entries: DMatrix<f64>, kv: &KnotVector, q: usize) -> Result<Self> {
        if entries.ncols() != kv.n_basis() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns but basis has {} functions",
                entries.ncols(),
                kv.n_basis()
            )));
        }
        Ok(Self {
            entries,
            intercept: false,
            penalty: penalty_matrix(kv, q)?.entries,
            penalty_order: q,
            blocks: vec![BasisBlock {
                offset: 0,
                knots: kv.clone(),
            }],
            warnings: Vec::new(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Prepends the unpenalized all-ones intercept column.
    pub fn with_intercept(mut self) -> Self {
        if self.intercept {
            return self;
        }
        let n = self.nrows();
        let d = self.ncols();
        self.entries = self.entries.insert_column(0, 1.0);
        let mut pen = DMatrix::zeros(d + 1, d + 1);
        pen.view_mut((1, 1), (d, d)).copy_from(&self.penalty);
        self.penalty = pen;
        for b in &mut self.blocks {
            b.offset += 1;
        }
        self.intercept = true;
        debug_assert_eq!(self.entries.nrows(), n);
        self
    }

    /// Rows `indices` (repetition allowed), same basis and penalty.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            entries: self.entries.select_rows(indices),
            intercept: self.intercept,
            penalty: self.penalty.clone(),
            penalty_order: self.penalty_order,
            blocks: self.blocks.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// Subtracts column means (skipping the intercept column) and returns them.
    pub fn center_columns(&mut self) -> Vec<f64> {
        let n = self.nrows() as f64;
        let skip = usize::from(self.intercept);
        let mut means = vec![0.0; self.ncols()];
        for (j, mut col) in self.entries.column_iter_mut().enumerate().skip(skip) {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
            means[j] = m;
        }
        means
    }

    /// Coefficient-space vector picking `β_m(t)`: basis values of block `m`
    /// at `t`, zeros elsewhere.
    pub fn basis_vector(&self, block: usize, t: f64) -> Result<DVector<f64>> {
        let b = &self.blocks[block];
        let row = b.knots.eval(t, 0)?;
        let mut v = DVector::zeros(self.ncols());
        v.rows_mut(b.offset, row.values.len())
            .copy_from_slice(&row.values);
        Ok(v)
    }

    /// Coefficients belonging to block `m`.
    pub fn block_coefficients<'a>(&self, block: usize, coefs: &'a [f64]) -> &'a [f64] {
        let b = &self.blocks[block];
        &coefs[b.offset..b.offset + b.knots.n_basis()]
    }
}

fn design_block(cs: &CurveSet, m: usize, kv: &KnotVector) -> Result<DMatrix<f64>> {
    // N = X diag(w) B
    let basis = kv.basis_matrix(cs.grid())?;
    let w = trapezoid_weights(cs.grid());
    let mut weighted = basis;
    for (k, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w[k];
    }
    Ok(cs.block(m) * weighted)
}

/// Design matrix for all covariates of `cs` using one basis per covariate.
///
/// A grid with fewer than `p + 2` points produces a result carrying a warning.
pub fn design_matrix(
    cs: &CurveSet,
    kv: &KnotVector,
    q: usize,
    intercept: bool,
) -> Result<DesignMatrix> {
    let blocks = (0..cs.covariate_count())
        .map(|m| design_matrix_for(cs, m, kv, q))
        .collect::<Result<Vec<_>>>()?;
    let design = multi_design(blocks)?;
    Ok(if intercept {
        design.with_intercept()
    } else {
        design
    })
}

/// Design block of covariate `m` against its own basis.
pub fn design_matrix_for(
    cs: &CurveSet,
    m: usize,
    kv: &KnotVector,
    q: usize,
) -> Result<DesignMatrix> {
    if m >= cs.covariate_count() {
        return Err(Error::InvalidArgument(format!(
            "covariate {m} out of range (have {})",
            cs.covariate_count()
        )));
    }
    if cs.grid_len() < 2 {
        return Err(Error::InvalidArgument(
            "observation grid needs at least 2 points".into(),
        ));
    }
    let (a, b) = kv.domain();
    let (g0, g1) = (cs.grid()[0], cs.grid()[cs.grid_len() - 1]);
    if g0 < a || g1 > b {
        return Err(Error::OutOfDomain {
            t: if g0 < a { g0 } else { g1 },
            lo: a,
            hi: b,
        });
    }
    let mut design = DesignMatrix::from_entries(design_block(cs, m, kv)?, kv, q)?;
    if cs.grid_len() < kv.degree() + 2 {
        design.warnings.push(format!(
            "grid has {} points, fewer than p + 2 = {}; design is coarse",
            cs.grid_len(),
            kv.degree() + 2
        ));
    }
    Ok(design)
}

/// Column-concatenates blocks; the penalty becomes block diagonal.
pub fn multi_design(blocks: Vec<DesignMatrix>) -> Result<DesignMatrix> {
    let mut iter = blocks.into_iter();
    let Some(first) = iter.next() else {
        return Err(Error::InvalidArgument("no design blocks".into()));
    };
    let rest: Vec<DesignMatrix> = iter.collect();
    if rest.is_empty() {
        return Ok(first);
    }
    let n = first.nrows();
    let mut all = vec![first];
    all.extend(rest);
    if let Some(bad) = all.iter().find(|b| b.nrows() != n) {
        return Err(Error::DimensionMismatch(format!(
            "design blocks have {} and {} rows",
            n,
            bad.nrows()
        )));
    }
    if all.iter().any(|b| b.intercept) {
        return Err(Error::InvalidArgument(
            "add the intercept after combining blocks".into(),
        ));
    }
    let d: usize = all.iter().map(|b| b.ncols()).sum();
    let mut entries = DMatrix::zeros(n, d);
    let mut penalty = DMatrix::zeros(d, d);
    let mut out_blocks = Vec::new();
    let mut warnings = Vec::new();
    let mut offset = 0;
    for b in &all {
        let w = b.ncols();
        entries.columns_mut(offset, w).copy_from(&b.entries);
        penalty
            .view_mut((offset, offset), (w, w))
            .copy_from(&b.penalty);
        for blk in &b.blocks {
            out_blocks.push(BasisBlock {
                offset: offset + blk.offset,
                knots: blk.knots.clone(),
            });
        }
        warnings.extend(b.warnings.iter().cloned());
        offset += w;
    }
    Ok(DesignMatrix {
        entries,
        intercept: false,
        penalty,
        penalty_order: all[0].penalty_order,
        blocks: out_blocks,
        warnings,
    })
}

/// Reads the curve CSV format: header `grid,t_1,...,t_T` (blocks separated by a
/// `|` column for several covariates), then rows `y,x(t_1),...,x(t_T)`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<CurveSet> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    parse_csv(file)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(1, e))?,
        None => return Err(Error::NoObservations),
    };
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            col: header.len(),
            msg: "header needs a label and at least one grid point".into(),
        });
    }
    // split header into blocks at '|'
    let mut blocks: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut markers = Vec::new();
    for (c, cell) in header.iter().enumerate().skip(1) {
        if cell == "|" {
            markers.push(c);
            blocks.push(Vec::new());
            continue;
        }
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row: 1,
            col: c + 1,
            msg: format!("grid value '{cell}' is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row: 1,
                col: c + 1,
                msg: "grid value is not finite".into(),
            });
        }
        blocks.last_mut().unwrap().push((c, v));
    }
    let grid: Vec<f64> = blocks[0].iter().map(|&(_, v)| v).collect();
    if grid.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 2,
            msg: "empty grid".into(),
        });
    }
    for (i, w) in grid.windows(2).enumerate() {
        if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::NonMonotoneGrid(i + 1));
        }
    }
    for (bi, b) in blocks.iter().enumerate().skip(1) {
        let g: Vec<f64> = b.iter().map(|&(_, v)| v).collect();
        if g != grid {
            return Err(Error::Parse {
                row: 1,
                col: b.first().map_or(header.len(), |&(c, _)| c + 1),
                msg: format!(
                    "covariate block {} grid differs from the first block",
                    bi + 1
                ),
            });
        }
    }
    let m = blocks.len();
    let t = grid.len();
    let width = header.len();

    let mut values: Vec<f64> = Vec::new();
    let mut response = Vec::new();
    for (r, rec) in records.enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row,
                found: rec.len(),
                expected: width,
            });
        }
        let parse = |c: usize| -> Result<f64> {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("'{cell}' is not a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("non-finite value '{cell}'"),
                })
            }
        };
        for &c in &markers {
            if !(rec[c].is_empty() || &rec[c] == "|") {
                return Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: "expected block marker '|'".into(),
                });
            }
        }
        response.push(parse(0)?);
        for b in &blocks {
            for &(c, _) in b {
                values.push(parse(c)?);
            }
        }
    }
    let n = response.len();
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let values = DMatrix::from_row_slice(n, m * t, &values);
    CurveSet::new(grid, values, response, m)
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    Error::Parse {
        row,
        col: 0,
        msg: e.to_string(),
    }
}

/// Writes the curve CSV format (single covariate or `|`-separated blocks).
pub fn write_csv<W: std::io::Write>(cs: &CurveSet, mut out: W) -> Result<()> {
    let t = cs.grid_len();
    let mut header = String::from("grid");
    for m in 0..cs.covariate_count() {
        if m > 0 {
            header.push_str(",|");
        }
        for g in cs.grid() {
            header.push_str(&format!(",{g:.16e}"));
        }
    }
    writeln!(out, "{header}")?;
    for i in 0..cs.n() {
        let mut line = format!("{:.16e}", cs.response()[i]);
        for m in 0..cs.covariate_count() {
            if m > 0 {
                line.push_str(",|");
            }
            for k in 0..t {
                line.push_str(&format!(",{:.16e}", cs.values()[(i, m * t + k)]));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
