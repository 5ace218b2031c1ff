//! Cell parameters and lattice matrices. Rows of a lattice are the vectors a, b, c in Å.

pub type Vec3 = [f64; 3];
pub type Matrix3 = [[f64; 3]; 3];

// Exact values for the right angle avoid 6e-17 noise in orthogonal cells.
fn cos_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        0.0
    } else {
        angle.to_radians().cos()
    }
}

fn sin_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        1.0
    } else {
        angle.to_radians().sin()
    }
}

/// Builds lattice vectors with a along x and b in the xy plane.
pub fn lattice_from_parameters(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<Matrix3, String> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(format!("cell lengths must be positive (got {a}, {b}, {c})"));
    }
    let (ca, cb, cg) = (cos_deg(alpha), cos_deg(beta), cos_deg(gamma));
    let sg = sin_deg(gamma);
    if sg.abs() < 1e-12 {
        return Err(format!("degenerate cell angle gamma = {gamma}"));
    }
    let cy = (ca - cb * cg) / sg;
    let cz2 = 1.0 - cb * cb - cy * cy;
    if cz2 <= 0.0 {
        return Err(format!(
            "cell angles ({alpha}, {beta}, {gamma}) do not form a valid cell"
        ));
    }
    Ok([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [c * cb, c * cy, c * cz2.sqrt()],
    ])
}

fn dot(u: Vec3, v: Vec3) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn norm(v: Vec3) -> f64 {
    dot(v, v).sqrt()
}

/// Inverse of [`lattice_from_parameters`]: `(a, b, c, alpha, beta, gamma)` in Å and degrees.
pub fn parameters_from_lattice(m: &Matrix3) -> [f64; 6] {
    let (a, b, c) = (norm(m[0]), norm(m[1]), norm(m[2]));
    let angle = |u: Vec3, v: Vec3, nu: f64, nv: f64| {
        (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees()
    };
    [
        a,
        b,
        c,
        angle(m[1], m[2], b, c),
        angle(m[0], m[2], a, c),
        angle(m[0], m[1], a, b),
    ]
}

pub fn determinant(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cartesian position of fractional coordinates `f` in lattice `m`.
pub fn to_cartesian(m: &Matrix3, f: Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = f[0] * m[0][k] + f[1] * m[1][k] + f[2] * m[2][k];
    }
    out
}
