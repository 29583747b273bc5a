//! Five-point essential matrix solver (Nistér's formulation).
//!
//! The five epipolar constraints leave a four-dimensional nullspace
//! `E = x·X + y·Y + z·Z + W`. Substituting into `det E = 0` and
//! `2·E·Eᵀ·E − tr(E·Eᵀ)·E = 0` gives ten cubics in `(x, y, z)`, which are
//! reduced by Gauss-Jordan elimination to a 3×3 polynomial matrix in `z`
//! whose determinant is a degree-10 polynomial.

use nalgebra::{Matrix3, SMatrix, SVector};

use super::{EssentialMatrix, GeometryError, NormalizedMatch};

type Lin = [f64; 4];
type Quad = [f64; 10];
type Cubic = [f64; 20];

// Linear monomials: x, y, z, 1.
const LIN_EXP: [[u8; 3]; 4] = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]];
// Quadratic monomials: x², y², z², xy, xz, yz, x, y, z, 1.
const QUAD_EXP: [[u8; 3]; 10] = [
    [2, 0, 0],
    [0, 2, 0],
    [0, 0, 2],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
];
// Cubic monomials in elimination order: the first ten columns are eliminated,
// the last ten only involve x·zⁱ, y·zⁱ and zⁱ.
const CUBIC_EXP: [[u8; 3]; 20] = [
    [3, 0, 0], // x³
    [0, 3, 0], // y³
    [2, 1, 0], // x²y
    [1, 2, 0], // xy²
    [2, 0, 1], // x²z
    [2, 0, 0], // x²
    [0, 2, 1], // y²z
    [0, 2, 0], // y²
    [1, 1, 1], // xyz
    [1, 1, 0], // xy
    [1, 0, 2], // xz²
    [1, 0, 1], // xz
    [1, 0, 0], // x
    [0, 1, 2], // yz²
    [0, 1, 1], // yz
    [0, 1, 0], // y
    [0, 0, 3], // z³
    [0, 0, 2], // z²
    [0, 0, 1], // z
    [0, 0, 0], // 1
];

const fn find<const N: usize>(table: &[[u8; 3]; N], e: [u8; 3]) -> usize {
    let mut i = 0;
    while i < N {
        if table[i][0] == e[0] && table[i][1] == e[1] && table[i][2] == e[2] {
            return i;
        }
        i += 1;
    }
    panic!("monomial not in table");
}

const fn lin_lin_table() -> [[usize; 4]; 4] {
    let mut t = [[0; 4]; 4];
    let mut i = 0;
    while i < 4 {
        let mut j = 0;
        while j < 4 {
            let e = [
                LIN_EXP[i][0] + LIN_EXP[j][0],
                LIN_EXP[i][1] + LIN_EXP[j][1],
                LIN_EXP[i][2] + LIN_EXP[j][2],
            ];
            t[i][j] = find(&QUAD_EXP, e);
            j += 1;
        }
        i += 1;
    }
    t
}

const fn quad_lin_table() -> [[usize; 4]; 10] {
    let mut t = [[0; 4]; 10];
    let mut i = 0;
    while i < 10 {
        let mut j = 0;
        while j < 4 {
            let e = [
                QUAD_EXP[i][0] + LIN_EXP[j][0],
                QUAD_EXP[i][1] + LIN_EXP[j][1],
                QUAD_EXP[i][2] + LIN_EXP[j][2],
            ];
            t[i][j] = find(&CUBIC_EXP, e);
            j += 1;
        }
        i += 1;
    }
    t
}

const LIN_LIN: [[usize; 4]; 4] = lin_lin_table();
const QUAD_LIN: [[usize; 4]; 10] = quad_lin_table();

fn mul_lin(a: &Lin, b: &Lin) -> Quad {
    let mut out = [0.0; 10];
    for i in 0..4 {
        for j in 0..4 {
            out[LIN_LIN[i][j]] += a[i] * b[j];
        }
    }
    out
}

fn mul_quad(a: &Quad, b: &Lin) -> Cubic {
    let mut out = [0.0; 20];
    for i in 0..10 {
        for j in 0..4 {
            out[QUAD_LIN[i][j]] += a[i] * b[j];
        }
    }
    out
}

fn add_assign<const N: usize>(acc: &mut [f64; N], v: &[f64; N], scale: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += scale * b;
    }
}

/// Univariate polynomial product, coefficients in ascending powers.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_eval(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

fn poly_eval_with_derivative(p: &[f64], z: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for c in p.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// Four-dimensional right nullspace of the 5×9 constraint matrix.
fn nullspace(matches: &[NormalizedMatch; 5]) -> Result<[SVector<f64, 9>; 4], GeometryError> {
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for (r, m) in matches.iter().enumerate() {
        let xa = m.bearing_a();
        let xb = m.bearing_b();
        for i in 0..3 {
            for j in 0..3 {
                q[(r, 3 * i + j)] = xb[i] * xa[j];
            }
        }
    }
    if !q.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::DegenerateSample);
    }
    let svd = q.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateSample)?;
    let mut order: [usize; 9] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    let s_fifth = svd.singular_values[order[4]];
    if !(s_max > 0.0) || s_fifth < 1e-10 * s_max {
        return Err(GeometryError::DegenerateSample);
    }
    Ok(std::array::from_fn(|k| v_t.row(order[5 + k]).transpose()))
}

/// Candidate essential matrices from exactly five calibrated correspondences.
///
/// Every candidate is scaled to unit Frobenius norm. At most ten are returned.
pub fn estimate_essential_minimal(
    matches: &[NormalizedMatch; 5],
) -> Result<Vec<EssentialMatrix>, GeometryError> {
    let basis = nullspace(matches)?;

    // E entries as linear polynomials in (x, y, z, 1).
    let e: [[Lin; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let k = 3 * i + j;
            [basis[0][k], basis[1][k], basis[2][k], basis[3][k]]
        })
    });

    let mut rows: [Cubic; 10] = [[0.0; 20]; 10];

    // det(E)
    let minor = |a: (usize, usize), b: (usize, usize), c: (usize, usize), d: (usize, usize)| {
        let mut q = mul_lin(&e[a.0][a.1], &e[b.0][b.1]);
        add_assign(&mut q, &mul_lin(&e[c.0][c.1], &e[d.0][d.1]), -1.0);
        q
    };
    let m0 = minor((1, 1), (2, 2), (1, 2), (2, 1));
    let m1 = minor((1, 0), (2, 2), (1, 2), (2, 0));
    let m2 = minor((1, 0), (2, 1), (1, 1), (2, 0));
    add_assign(&mut rows[0], &mul_quad(&m0, &e[0][0]), 1.0);
    add_assign(&mut rows[0], &mul_quad(&m1, &e[0][1]), -1.0);
    add_assign(&mut rows[0], &mul_quad(&m2, &e[0][2]), 1.0);

    // E·Eᵀ and its trace.
    let mut eet = [[[0.0; 10]; 3]; 3];
    #[allow(clippy::needless_range_loop)]
    for i in 0..3 {
        for j in i..3 {
            let mut q = [0.0; 10];
            for k in 0..3 {
                add_assign(&mut q, &mul_lin(&e[i][k], &e[j][k]), 1.0);
            }
            eet[i][j] = q;
            eet[j][i] = q;
        }
    }
    let mut trace = [0.0; 10];
    for (i, row) in eet.iter().enumerate() {
        add_assign(&mut trace, &row[i], 1.0);
    }

    // 2·E·Eᵀ·E − tr(E·Eᵀ)·E
    for i in 0..3 {
        for j in 0..3 {
            let row = &mut rows[1 + 3 * i + j];
            for k in 0..3 {
                add_assign(row, &mul_quad(&eet[i][k], &e[k][j]), 2.0);
            }
            add_assign(row, &mul_quad(&trace, &e[i][j]), -1.0);
        }
    }

    // Gauss-Jordan on the first ten columns with partial pivoting.
    let mut m = SMatrix::<f64, 10, 20>::from_fn(|r, c| rows[r][c]);
    for col in 0..10 {
        let (pivot_row, pivot) = (col..10)
            .map(|r| (r, m[(r, col)]))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty");
        if !(pivot.abs() >= 1e-12) {
            return Err(GeometryError::DegenerateSample);
        }
        m.swap_rows(col, pivot_row);
        let inv = 1.0 / m[(col, col)];
        for c in col..20 {
            m[(col, c)] *= inv;
        }
        for r in 0..10 {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f != 0.0 {
                for c in col..20 {
                    m[(r, c)] -= f * m[(col, c)];
                }
            }
        }
    }

    // Rows for x²z, x², y²z, y², xyz, xy pair up as ⟨row⟩ − z·⟨next row⟩,
    // cancelling the leading monomial and leaving x·p(z) + y·q(z) + r(z).
    // After elimination each row reads `lead + Σ m[c]·monomial_c = 0`.
    let reduced = |upper: usize, lower: usize| -> [Vec<f64>; 3] {
        let a = |c: usize| m[(upper, c)];
        let b = |c: usize| m[(lower, c)];
        [
            vec![a(12), a(11) - b(12), a(10) - b(11), -b(10)],
            vec![a(15), a(14) - b(15), a(13) - b(14), -b(13)],
            vec![a(19), a(18) - b(19), a(17) - b(18), a(16) - b(17), -b(16)],
        ]
    };
    let bz = [reduced(4, 5), reduced(6, 7), reduced(8, 9)];

    let cof = |r1: &[Vec<f64>; 3], r2: &[Vec<f64>; 3], i: usize, j: usize| {
        poly_sub(&poly_mul(&r1[i], &r2[j]), &poly_mul(&r1[j], &r2[i]))
    };
    let c0 = cof(&bz[1], &bz[2], 1, 2);
    let c1 = cof(&bz[1], &bz[2], 0, 2);
    let c2 = cof(&bz[1], &bz[2], 0, 1);
    let det = poly_add(
        &poly_sub(&poly_mul(&bz[0][0], &c0), &poly_mul(&bz[0][1], &c1)),
        &poly_mul(&bz[0][2], &c2),
    );

    let roots = real_roots(&det);
    let mut out = Vec::with_capacity(roots.len());
    for z in roots {
        let eval = |row: &[Vec<f64>; 3]| {
            nalgebra::Vector3::new(
                poly_eval(&row[0], z),
                poly_eval(&row[1], z),
                poly_eval(&row[2], z),
            )
        };
        let r = [eval(&bz[0]), eval(&bz[1]), eval(&bz[2])];
        let candidates = [r[0].cross(&r[1]), r[0].cross(&r[2]), r[1].cross(&r[2])];
        let v = candidates
            .iter()
            .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .expect("three candidates");
        if !(v.z.abs() > 1e-14 * v.norm()) {
            continue;
        }
        let x = v.x / v.z;
        let y = v.y / v.z;
        let flat = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let norm = flat.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            continue;
        }
        let em = Matrix3::from_row_slice(flat.as_slice()) / norm;
        out.push(EssentialMatrix::from_raw(em));
    }
    Ok(out)
}

/// Real roots via companion-matrix eigenvalues, polished with Newton steps.
fn real_roots(poly: &[f64]) -> Vec<f64> {
    let scale = poly.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Vec::new();
    }
    let mut degree = poly.len() - 1;
    while degree > 0 && poly[degree].abs() <= 1e-14 * scale {
        degree -= 1;
    }
    if degree == 0 {
        return Vec::new();
    }
    let lead = poly[degree];
    let mut companion = nalgebra::DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -poly[i] / lead;
    }
    let p = &poly[..=degree];
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|c| c.im.abs() < 1e-8 * (1.0 + c.re.abs()) && c.re.is_finite())
        .map(|c| {
            let mut z = c.re;
            for _ in 0..3 {
                let (v, d) = poly_eval_with_derivative(p, z);
                if d == 0.0 {
                    break;
                }
                let next = z - v / d;
                if !next.is_finite() || poly_eval(p, next).abs() > v.abs() {
                    break;
                }
                z = next;
            }
            z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geodesic_distance, skew};
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(
        rng: &mut ChaCha8Rng,
        r: &Matrix3<f64>,
        t: &Vector3<f64>,
    ) -> [NormalizedMatch; 5] {
        std::array::from_fn(|_| {
            let p = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(3.0..8.0),
            );
            let q = r * p + t;
            NormalizedMatch::new(p.x / p.z, p.y / p.z, q.x / q.z, q.y / q.z)
        })
    }

    /// Max-abs distance between unit-norm matrices, modulo sign.
    fn dist_up_to_sign(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let a = a / a.norm();
        let b = b / b.norm();
        (a - b).abs().max().min((a + b).abs().max())
    }

    #[test]
    fn recovers_ground_truth_essential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = Rotation3::from_euler_angles(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            )
            .into_inner();
            let t = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let pts = synthetic(&mut rng, &r, &t);
            let truth = skew(&t) * r;
            let cands = estimate_essential_minimal(&pts).unwrap();
            assert!(!cands.is_empty() && cands.len() <= 10);
            let best = cands
                .iter()
                .map(|e| dist_up_to_sign(e.matrix(), &truth))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "best deviation {best}");
            for e in &cands {
                for m in &pts {
                    assert!(m.epipolar_residual(e.matrix()).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn candidates_are_essential_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Rotation3::from_euler_angles(0.1, 0.2, -0.1).into_inner();
        let t = Vector3::new(1.0, 0.2, 0.1).normalize();
        let pts = synthetic(&mut rng, &r, &t);
        let cands = estimate_essential_minimal(&pts).unwrap();
        let truth = skew(&t) * r;
        let e = cands
            .iter()
            .min_by(|a, b| {
                dist_up_to_sign(a.matrix(), &truth).total_cmp(&dist_up_to_sign(b.matrix(), &truth))
            })
            .unwrap();
        assert!(e.is_valid(1e-6));
        let d = geodesic_distance(&r, &r);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let m = NormalizedMatch::new(0.1, 0.2, 0.15, 0.2);
        assert_eq!(
            estimate_essential_minimal(&[m; 5]),
            Err(GeometryError::DegenerateSample)
        );
    }

    #[test]
    fn pure_rotation_candidates_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Rotation3::from_euler_angles(0.05, -0.1, 0.2).into_inner();
        let pts = synthetic(&mut rng, &r, &Vector3::zeros());
        match estimate_essential_minimal(&pts) {
            Ok(cands) => {
                for e in &cands {
                    for m in &pts {
                        assert!(m.epipolar_residual(e.matrix()).abs() < 1e-8);
                    }
                }
            }
            Err(e) => assert_eq!(e, GeometryError::DegenerateSample),
        }
    }

    #[test]
    fn real_roots_of_known_polynomial() {
        // (z - 1)(z + 2)(z - 3)(z² + 1)
        let p = poly_mul(&poly_mul(&poly_mul(&[-1.0, 1.0], &[2.0, 1.0]), &[-3.0, 1.0]), &[1.0, 0.0, 1.0]);
        let mut roots = real_roots(&p);
        roots.sort_by(f64::total_cmp);
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((r - e).abs() < 1e-12);
        }
    }
}
