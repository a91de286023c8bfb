/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy of keyword posterior `p` against `label`.
pub fn ce_loss(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}
