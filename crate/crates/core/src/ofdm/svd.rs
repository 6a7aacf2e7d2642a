//! Per-subcarrier SVD subchannels.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ris_channel::CMatrix;

/// `H_k = U_k diag(lambda_k) V_k^H` for every subcarrier.
#[derive(Debug, Clone)]
pub struct SvdDecomposition {
    pub u: Vec<CMatrix>,
    pub v: Vec<CMatrix>,
    /// Descending, nonnegative.
    pub lambda: Vec<Vec<f64>>,
}

impl SvdDecomposition {
    pub fn n_subcarriers(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_streams(&self) -> usize {
        self.lambda.first().map_or(0, Vec::len)
    }

    /// Unit-gain subchannels: identity precoders, all singular values `gain`.
    pub fn flat(n_subcarriers: usize, n_streams: usize, gain: f64) -> Self {
        let eye = CMatrix::identity(n_streams, n_streams);
        Self {
            u: vec![eye.clone(); n_subcarriers],
            v: vec![eye; n_subcarriers],
            lambda: vec![vec![gain; n_streams]; n_subcarriers],
        }
    }
}

fn decompose(h: &CMatrix) -> (CMatrix, CMatrix, Vec<f64>) {
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.adjoint();
    let sv = svd.singular_values;
    let r = sv.len();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let mut u_out = CMatrix::zeros(u.nrows(), r);
    let mut v_out = CMatrix::zeros(v.nrows(), r);
    let mut lambda = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).into_owned();
        let mut vc = v.column(src).into_owned();
        // Make the first non-negligible entry of u real-positive; rotating
        // v by the same phase keeps u v^H unchanged.
        if let Some(first) = uc.iter().find(|z| z.norm() > 1e-12) {
            let rot = Complex64::from_polar(1.0, -first.arg());
            uc *= rot;
            vc *= rot;
        }
        u_out.set_column(dst, &uc);
        v_out.set_column(dst, &vc);
        lambda.push(sv[src].max(0.0));
    }
    (u_out, v_out, lambda)
}

/// Singular values only, descending. 2x2 matrices use the closed form from
/// the eigenvalues of `H^H H`.
pub fn singular_values(h: &CMatrix) -> Vec<f64> {
    if h.nrows() == 2 && h.ncols() == 2 {
        let (a, b, c, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
        let fro = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
        let det = (a * d - b * c).norm_sqr();
        let disc = (fro * fro - 4.0 * det).max(0.0).sqrt();
        let s1 = (0.5 * (fro + disc)).max(0.0);
        // Product form avoids cancellation for the small value.
        let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
        return vec![s1.sqrt(), s2.max(0.0).sqrt()];
    }
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// SVD of every subcarrier matrix.
pub fn svd_subchannels(cfr: &[CMatrix]) -> Result<SvdDecomposition> {
    let mut out = SvdDecomposition {
        u: Vec::with_capacity(cfr.len()),
        v: Vec::with_capacity(cfr.len()),
        lambda: Vec::with_capacity(cfr.len()),
    };
    for (k, h) in cfr.iter().enumerate() {
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("channel matrix at subcarrier {k}")));
        }
        let (u, v, lambda) = decompose(h);
        out.u.push(u);
        out.v.push(v);
        out.lambda.push(lambda);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, vals: &[(f64, f64)]) -> CMatrix {
        CMatrix::from_row_iterator(rows, cols, vals.iter().map(|&(a, b)| Complex64::new(a, b)))
    }

    #[test]
    fn identity_and_diagonal() {
        let d = svd_subchannels(&[CMatrix::identity(2, 2)]).unwrap();
        assert!((d.lambda[0][0] - 1.0).abs() < 1e-12 && (d.lambda[0][1] - 1.0).abs() < 1e-12);
        let h = m(2, 2, &[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (3.0, 0.0)]);
        let d = svd_subchannels(&[h]).unwrap();
        assert!((d.lambda[0][0] - 3.0).abs() < 1e-12);
        assert!(d.lambda[0][1].abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let h = m(1, 1, &[(f64::NAN, 0.0)]);
        assert!(svd_subchannels(&[h]).is_err());
    }

    #[test]
    fn sign_convention() {
        let h = m(2, 2, &[(0.3, -1.0), (0.2, 0.4), (-0.7, 0.1), (1.1, 0.5)]);
        let d = svd_subchannels(&[h]).unwrap();
        for c in 0..2 {
            let first = d.u[0][(0, c)];
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
        }
    }

    #[test]
    fn closed_form_matches_general() {
        let h = m(2, 2, &[(0.3, -1.0), (0.2, 0.4), (-0.7, 0.1), (1.1, 0.5)]);
        let fast = singular_values(&h);
        let d = svd_subchannels(&[h]).unwrap();
        for (a, b) in fast.iter().zip(&d.lambda[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangular_shapes() {
        let h = m(2, 3, &[(1.0, 0.0), (0.5, 0.5), (0.0, 1.0), (0.2, 0.0), (0.0, -0.3), (2.0, 0.1)]);
        let d = svd_subchannels(std::slice::from_ref(&h)).unwrap();
        let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            d.lambda[0].iter().map(|x| Complex64::new(*x, 0.0)),
        ));
        let rec = &d.u[0] * lam * d.v[0].adjoint();
        assert!((rec - h).norm() < 1e-12);
    }
}
