use super::tensor::Real;

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy `-[y ln p + (1-y) ln(1-p)]` and its derivative with
/// respect to `p` (evaluated at the clamped probability).
pub fn bce_loss<T: Real>(p: T, y: T) -> (T, T) {
    let eps = T::of(BCE_EPS);
    let p = p.max(eps).min(T::one() - eps);
    let one = T::one();
    let loss = -(y * p.ln() + (one - y) * (one - p).ln());
    let grad = -y / p + (one - y) / (one - p);
    (loss, grad)
}
