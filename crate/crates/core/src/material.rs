//! Isotropic plane-strain linear elasticity.
//!
//! Strains are stored as `(xx, yy, xy)` with the off-diagonal value kept once;
//! the density doubles it: `w(e) = μ(xx² + yy² + 2xy²) + (λ/2)(xx + yy)²`.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaterialError {
    #[error("shear modulus mu must be positive (got {0})")]
    NonPositiveMu(f64),
    #[error("lambda + mu must be positive for a definite energy (got lambda = {lambda}, mu = {mu})")]
    Indefinite { lambda: f64, mu: f64 },
    #[error("griffith constant must be non-negative (got {0})")]
    NegativeGriffith(f64),
    #[error("material parameters must be finite")]
    NonFinite,
}

/// Lamé parameters plus the Griffith constant `G` (energy per unit length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    lambda: f64,
    mu: f64,
    griffith: f64,
}

impl Material {
    pub fn new(lambda: f64, mu: f64, griffith: f64) -> Result<Self, MaterialError> {
        if !(lambda.is_finite() && mu.is_finite() && griffith.is_finite()) {
            return Err(MaterialError::NonFinite);
        }
        if mu <= 0.0 {
            return Err(MaterialError::NonPositiveMu(mu));
        }
        if lambda + mu <= 0.0 {
            return Err(MaterialError::Indefinite { lambda, mu });
        }
        if griffith < 0.0 {
            return Err(MaterialError::NegativeGriffith(griffith));
        }
        Ok(Material { lambda, mu, griffith })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn griffith(&self) -> f64 {
        self.griffith
    }

    pub fn with_griffith(self, griffith: f64) -> Result<Self, MaterialError> {
        Material::new(self.lambda, self.mu, griffith)
    }

    /// Largest `c` with `w(e) ≥ c·(e:e)` for every symmetric `e`.
    pub fn coercivity(&self) -> f64 {
        // (tr e)² ≤ 2 e:e in two dimensions
        self.mu + self.lambda.min(0.0)
    }
}

/// A symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrainTensor {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl StrainTensor {
    pub const fn new(xx: f64, yy: f64, xy: f64) -> Self {
        StrainTensor { xx, yy, xy }
    }

    /// `e:e = xx² + yy² + 2xy²`.
    pub fn norm_sq(&self) -> f64 {
        self.xx * self.xx + self.yy * self.yy + 2.0 * self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn scale(self, t: f64) -> Self {
        StrainTensor::new(self.xx * t, self.yy * t, self.xy * t)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.xx, self.yy, self.xy]
    }
}

/// Symmetric part `½(∇u + ∇uᵀ)` of a displacement gradient `grad[i][j] = ∂u_i/∂x_j`.
pub fn sym_grad(grad: [[f64; 2]; 2]) -> StrainTensor {
    StrainTensor::new(grad[0][0], grad[1][1], 0.5 * (grad[0][1] + grad[1][0]))
}

/// Energy density `w(e)`.
pub fn elastic_density(e: &StrainTensor, m: &Material) -> f64 {
    let tr = e.trace();
    m.mu * e.norm_sq() + 0.5 * m.lambda * tr * tr
}

/// Constant matrix `Q` with `w(e) = ½ sᵀ Q s` for `s = (xx, yy, xy)`.
///
/// The shear entry is `4μ` because `s` carries the tensor (not engineering)
/// shear strain.
pub fn stiffness_form(m: &Material) -> [[f64; 3]; 3] {
    let (l, mu) = (m.lambda, m.mu);
    [[l + 2.0 * mu, l, 0.0], [l, l + 2.0 * mu, 0.0], [0.0, 0.0, 4.0 * mu]]
}

/// Evaluates `½ sᵀ Q s`.
pub fn quadratic_form(q: &[[f64; 3]; 3], e: &StrainTensor) -> f64 {
    let s = e.as_array();
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += s[i] * q[i][j] * s[j];
        }
    }
    0.5 * acc
}
