//! Viterbi smoothing of per-frame posteriors with a symmetric two-state
//! chain: stay with probability 1−p, switch with probability p.

use super::FramesegError;

const CLAMP: f64 = 1e-6;

/// Most likely state path given independent per-frame posteriors for state
/// 1. Uniform initial distribution, log domain, posteriors clamped to
/// [1e−6, 1−1e−6]; ties resolve toward state 0, the conservative label.
pub fn viterbi_smooth(posteriors: &[f64], p_switch: f64) -> Result<Vec<bool>, FramesegError> {
    if !(p_switch > 0.0 && p_switch <= 0.5) {
        return Err(FramesegError::InvalidPSwitch(p_switch));
    }
    for &p in posteriors {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(FramesegError::DegeneratePosterior(p));
        }
    }
    if posteriors.is_empty() {
        return Ok(Vec::new());
    }

    let stay = (1.0 - p_switch).ln();
    let switch = p_switch.ln();
    let emit = |p: f64, state: usize| -> f64 {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        if state == 1 {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    };

    let t_len = posteriors.len();
    let mut back = vec![[0usize; 2]; t_len];
    let init = 0.5f64.ln();
    let mut delta = [init + emit(posteriors[0], 0), init + emit(posteriors[0], 1)];
    for t in 1..t_len {
        let mut next = [0.0f64; 2];
        for state in 0..2 {
            let from0 = delta[0] + if state == 0 { stay } else { switch };
            let from1 = delta[1] + if state == 1 { stay } else { switch };
            let prev = if from0 >= from1 { 0 } else { 1 };
            back[t][state] = prev;
            next[state] = from0.max(from1) + emit(posteriors[t], state);
        }
        delta = next;
    }

    let mut labels = vec![false; t_len];
    let mut state = usize::from(delta[1] > delta[0]);
    labels[t_len - 1] = state == 1;
    for t in (1..t_len).rev() {
        state = back[t][state];
        labels[t - 1] = state == 1;
    }
    Ok(labels)
}
