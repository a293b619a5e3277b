//! Bounding-box geometry and the IoU-family regression losses (IoU, GIoU,
//! DIoU, CIoU, SIoU) with analytic gradients with respect to the predicted
//! box, plus a central finite-difference verifier.
//!
//! Gradients are exact chain-rule derivatives, carried through every formula
//! by a four-component dual number seeded on the predicted `(cx, cy, w, h)`.
//! The ground-truth box is constant, matching training usage. Kinks from
//! `min`/`max`/`abs` take the two-sided average as the subgradient, which
//! makes the gradient exactly zero at coincident boxes.

use crate::{scalar, Error, Result, Scalar};

/// Axis-aligned box in center format, normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T: Scalar> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        if !(cx >= T::zero() && cx <= T::one()) || !(cy >= T::zero() && cy <= T::one()) {
            return Err(Error::param(format!(
                "box center ({cx}, {cy}) outside [0,1]"
            )));
        }
        if !(w > T::zero() && w <= T::one()) || !(h > T::zero() && h <= T::one()) {
            return Err(Error::param(format!(
                "box extents ({w}, {h}) outside (0,1]"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Corners `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (T, T, T, T) {
        let two = scalar::<T>(2.0);
        (
            self.cx - self.w / two,
            self.cy - self.h / two,
            self.cx + self.w / two,
            self.cy + self.h / two,
        )
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }
}

/// Shape-cost exponent for the SIoU loss.
#[derive(Debug, Clone, Copy)]
pub struct SIoUConfig<T: Scalar> {
    pub theta: T,
}

impl<T: Scalar> SIoUConfig<T> {
    pub fn new(theta: T) -> Result<Self> {
        if theta < scalar(2.0) || theta > scalar(6.0) {
            return Err(Error::param(format!("siou theta {theta} outside [2, 6]")));
        }
        Ok(Self { theta })
    }
}

impl<T: Scalar> Default for SIoUConfig<T> {
    fn default() -> Self {
        Self { theta: scalar(4.0) }
    }
}

/// A loss value together with `∂L/∂(cx, cy, w, h)` of the predicted box.
#[derive(Debug, Clone, Copy)]
pub struct LossValueGrad<T: Scalar> {
    pub value: T,
    pub grad: [T; 4],
}

/// Center distances below this are treated as coincident: the angle cost and
/// its gradient are defined as 0 there.
pub const CENTER_EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Forward-mode dual number over the four predicted-box parameters.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Dual<T: Scalar> {
    v: T,
    d: [T; 4],
}

impl<T: Scalar> Dual<T> {
    fn con(v: T) -> Self {
        Self {
            v,
            d: [T::zero(); 4],
        }
    }

    fn var(v: T, slot: usize) -> Self {
        let mut d = [T::zero(); 4];
        d[slot] = T::one();
        Self { v, d }
    }

    fn scale(self, k: T) -> Self {
        Self {
            v: self.v * k,
            d: self.d.map(|g| g * k),
        }
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Self {
            v: e,
            d: self.d.map(|g| g * e),
        }
    }

    fn atan(self) -> Self {
        let k = T::one() / (T::one() + self.v * self.v);
        Self {
            v: self.v.atan(),
            d: self.d.map(|g| g * k),
        }
    }

    /// `self^e` for a scalar exponent `e >= 1` and `self >= 0`.
    fn powf(self, e: T) -> Self {
        let k = if self.v == T::zero() {
            T::zero()
        } else {
            e * self.v.powf(e - T::one())
        };
        Self {
            v: self.v.powf(e),
            d: self.d.map(|g| g * k),
        }
    }

    /// Absolute value; the kink at 0 takes subgradient 0.
    fn abs(self) -> Self {
        if self.v > T::zero() {
            self
        } else if self.v < T::zero() {
            -self
        } else {
            Self::con(T::zero())
        }
    }

    /// Maximum; ties average the two branch derivatives.
    fn max(self, other: Self) -> Self {
        if self.v > other.v {
            self
        } else if self.v < other.v {
            other
        } else {
            (self + other).scale(scalar(0.5))
        }
    }

    /// Minimum; ties average the two branch derivatives.
    fn min(self, other: Self) -> Self {
        if self.v < other.v {
            self
        } else if self.v > other.v {
            other
        } else {
            (self + other).scale(scalar(0.5))
        }
    }
}

impl<T: Scalar> std::ops::Add for Dual<T> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self {
            v: self.v + r.v,
            d: [
                self.d[0] + r.d[0],
                self.d[1] + r.d[1],
                self.d[2] + r.d[2],
                self.d[3] + r.d[3],
            ],
        }
    }
}

impl<T: Scalar> std::ops::Sub for Dual<T> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Self {
            v: self.v - r.v,
            d: [
                self.d[0] - r.d[0],
                self.d[1] - r.d[1],
                self.d[2] - r.d[2],
                self.d[3] - r.d[3],
            ],
        }
    }
}

impl<T: Scalar> std::ops::Mul for Dual<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Self {
            v: self.v * r.v,
            d: [
                self.d[0] * r.v + self.v * r.d[0],
                self.d[1] * r.v + self.v * r.d[1],
                self.d[2] * r.v + self.v * r.d[2],
                self.d[3] * r.v + self.v * r.d[3],
            ],
        }
    }
}

impl<T: Scalar> std::ops::Div for Dual<T> {
    type Output = Self;
    fn div(self, r: Self) -> Self {
        let inv = T::one() / r.v;
        let inv2 = inv * inv;
        Self {
            v: self.v * inv,
            d: [
                (self.d[0] * r.v - self.v * r.d[0]) * inv2,
                (self.d[1] * r.v - self.v * r.d[1]) * inv2,
                (self.d[2] * r.v - self.v * r.d[2]) * inv2,
                (self.d[3] * r.v - self.v * r.d[3]) * inv2,
            ],
        }
    }
}

impl<T: Scalar> std::ops::Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: self.d.map(|g| -g),
        }
    }
}

/// Geometry atoms shared by every loss, tracked as duals of the prediction.
struct Geometry<T: Scalar> {
    iou: Dual<T>,
    union: Dual<T>,
    /// Center offsets gt − pred.
    dx: Dual<T>,
    dy: Dual<T>,
    /// Enclosing-box extents.
    enc_w: Dual<T>,
    enc_h: Dual<T>,
    w: Dual<T>,
    h: Dual<T>,
}

fn geometry<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> Geometry<T> {
    let half = scalar::<T>(0.5);
    let cx = Dual::var(b.cx, 0);
    let cy = Dual::var(b.cy, 1);
    let w = Dual::var(b.w, 2);
    let h = Dual::var(b.h, 3);

    let x1 = cx - w.scale(half);
    let x2 = cx + w.scale(half);
    let y1 = cy - h.scale(half);
    let y2 = cy + h.scale(half);
    let (gx1, gy1, gx2, gy2) = g.corners();
    let (gx1, gy1, gx2, gy2) = (
        Dual::con(gx1),
        Dual::con(gy1),
        Dual::con(gx2),
        Dual::con(gy2),
    );

    let zero = Dual::con(T::zero());
    let iw = (x2.min(gx2) - x1.max(gx1)).max(zero);
    let ih = (y2.min(gy2) - y1.max(gy1)).max(zero);
    let inter = iw * ih;
    let union = w * h + Dual::con(g.area()) - inter;
    let iou = inter / union;

    Geometry {
        iou,
        union,
        dx: Dual::con(g.cx) - cx,
        dy: Dual::con(g.cy) - cy,
        enc_w: x2.max(gx2) - x1.min(gx1),
        enc_h: y2.max(gy2) - y1.min(gy1),
        w,
        h,
    }
}

fn finish<T: Scalar>(loss: Dual<T>) -> LossValueGrad<T> {
    LossValueGrad {
        value: loss.v,
        grad: loss.d,
    }
}

/// Intersection over union; 0 for disjoint boxes, 1 for identical ones.
pub fn iou<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> T {
    geometry(b, g).iou.v
}

/// `1 − IoU + (C − U)/C` with `C` the enclosing-box area.
pub fn giou_loss<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> LossValueGrad<T> {
    let geo = geometry(b, g);
    let one = Dual::con(T::one());
    let c = geo.enc_w * geo.enc_h;
    let penalty = (c - geo.union) / c;
    finish(one - geo.iou + penalty)
}

/// `1 − IoU + ρ²/c²` with `ρ` the center distance and `c` the enclosing
/// diagonal. A degenerate zero diagonal yields penalty 0 (limit value).
pub fn diou_loss<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> LossValueGrad<T> {
    let geo = geometry(b, g);
    let one = Dual::con(T::one());
    finish(one - geo.iou + center_penalty(&geo))
}

fn center_penalty<T: Scalar>(geo: &Geometry<T>) -> Dual<T> {
    let rho2 = geo.dx * geo.dx + geo.dy * geo.dy;
    let c2 = geo.enc_w * geo.enc_w + geo.enc_h * geo.enc_h;
    if c2.v <= T::zero() {
        return Dual::con(T::zero());
    }
    rho2 / c2
}

/// DIoU plus the aspect-consistency term `α·v`. The aspect weight `α` is
/// differentiated through like every other term, so the gradient is the true
/// derivative of the returned value.
pub fn ciou_loss<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> LossValueGrad<T> {
    let geo = geometry(b, g);
    let one = Dual::con(T::one());
    let four_over_pi2 = scalar::<T>(4.0 / (std::f64::consts::PI * std::f64::consts::PI));
    let gt_aspect = Dual::con((g.w / g.h).atan());
    let diff = gt_aspect - (geo.w / geo.h).atan();
    let v = (diff * diff).scale(four_over_pi2);
    // guard keeps α finite (0/0 → 0) at perfect overlap with equal aspect
    let alpha = v / (one - geo.iou + v + Dual::con(scalar(1e-12)));
    finish(one - geo.iou + center_penalty(&geo) + alpha * v)
}

/// Angle cost `Λ = 1 − 2·sin²(arcsin(c_h/σ) − π/4)`, computed in the
/// equivalent algebraic form `2·|Δx|·|Δy|/σ²` (identical for σ > 0, and free
/// of the arcsin derivative blow-up near axis alignment). Coincident centers
/// (σ below [`CENTER_EPS`]) return Λ = 0 with zero gradient.
fn angle_cost<T: Scalar>(geo: &Geometry<T>) -> Dual<T> {
    let sigma2 = geo.dx * geo.dx + geo.dy * geo.dy;
    if sigma2.v.sqrt() < scalar(CENTER_EPS) {
        return Dual::con(T::zero());
    }
    (geo.dx.abs() * geo.dy.abs()).scale(scalar(2.0)) / sigma2
}

/// SIoU loss `1 − IoU + (Δ + Ω)/2`.
///
/// - distance cost `Δ = Σ_{t∈{x,y}} (1 − e^{−γ·ρ_t})`, `γ = 2 − Λ`,
///   `ρ_x = (Δcx/c_w)²`, `ρ_y = (Δcy/c_h)²` with `(c_w, c_h)` the
///   enclosing-box width and height;
/// - shape cost `Ω = Σ_{t∈{w,h}} (1 − e^{−ω_t})^θ`,
///   `ω_t = |t − t_gt| / max(t, t_gt)`.
pub fn siou_loss<T: Scalar>(b: &BBox<T>, g: &BBox<T>, cfg: &SIoUConfig<T>) -> LossValueGrad<T> {
    let geo = geometry(b, g);
    let one = Dual::con(T::one());
    let lambda = angle_cost(&geo);
    let gamma = Dual::con(scalar(2.0)) - lambda;

    let rx = geo.dx / geo.enc_w;
    let ry = geo.dy / geo.enc_h;
    let rho_x = rx * rx;
    let rho_y = ry * ry;
    let delta = (one - (-(gamma * rho_x)).exp()) + (one - (-(gamma * rho_y)).exp());

    let omega_w = (geo.w - Dual::con(g.w)).abs() / geo.w.max(Dual::con(g.w));
    let omega_h = (geo.h - Dual::con(g.h)).abs() / geo.h.max(Dual::con(g.h));
    let shape = (one - (-omega_w).exp()).powf(cfg.theta)
        + (one - (-omega_h).exp()).powf(cfg.theta);

    finish(one - geo.iou + (delta + shape).scale(scalar(0.5)))
}

/// Standalone angle-cost evaluation (exposed for direct checks of the Λ
/// limit cases).
pub fn siou_angle_cost<T: Scalar>(b: &BBox<T>, g: &BBox<T>) -> T {
    angle_cost(&geometry(b, g)).v
}

/// The implemented gradient-bearing losses, as an enumerable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Giou,
    Diou,
    Ciou,
    Siou,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Giou, LossKind::Diou, LossKind::Ciou, LossKind::Siou];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Giou => "giou",
            LossKind::Diou => "diou",
            LossKind::Ciou => "ciou",
            LossKind::Siou => "siou",
        }
    }

    pub fn evaluate<T: Scalar>(
        self,
        b: &BBox<T>,
        g: &BBox<T>,
        cfg: &SIoUConfig<T>,
    ) -> LossValueGrad<T> {
        match self {
            LossKind::Giou => giou_loss(b, g),
            LossKind::Diou => diou_loss(b, g),
            LossKind::Ciou => ciou_loss(b, g),
            LossKind::Siou => siou_loss(b, g, cfg),
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference verifier.
// ---------------------------------------------------------------------------

/// Central finite differences of a scalar box function, step `h` per
/// parameter.
pub fn finite_diff_grad<T: Scalar>(
    f: impl Fn(&BBox<T>) -> T,
    b: &BBox<T>,
    step: T,
) -> [T; 4] {
    let two = scalar::<T>(2.0);
    let mut grad = [T::zero(); 4];
    for (i, slot) in grad.iter_mut().enumerate() {
        let mut plus = *b;
        let mut minus = *b;
        let (p, m) = match i {
            0 => (&mut plus.cx, &mut minus.cx),
            1 => (&mut plus.cy, &mut minus.cy),
            2 => (&mut plus.w, &mut minus.w),
            _ => (&mut plus.h, &mut minus.h),
        };
        *p = *p + step;
        *m = *m - step;
        *slot = (f(&plus) - f(&minus)) / (two * step);
    }
    grad
}

/// Worst per-component error, relative above magnitude 1 and absolute below:
/// `max_i |a_i − f_i| / max(1, |a_i|, |f_i|)`.
pub fn grad_rel_error<T: Scalar>(analytic: &[T; 4], fd: &[T; 4]) -> T {
    let mut worst = T::zero();
    for i in 0..4 {
        let denom = T::one().max(analytic[i].abs()).max(fd[i].abs());
        let err = (analytic[i] - fd[i]).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}

/// Run the finite-difference check of one loss at one box pair.
pub fn gradient_check<T: Scalar>(
    kind: LossKind,
    b: &BBox<T>,
    g: &BBox<T>,
    cfg: &SIoUConfig<T>,
    step: T,
) -> T {
    let analytic = kind.evaluate(b, g, cfg).grad;
    let fd = finite_diff_grad(|p| kind.evaluate(p, g, cfg).value, b, step);
    grad_rel_error(&analytic, &fd)
}
