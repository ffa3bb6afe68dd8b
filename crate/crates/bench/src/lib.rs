//! Fixtures shared by the benchmarks.

use msgraph_core::can_log::{CanFrame, Label, Pid};
use msgraph_core::inject::{generate_benign, inject_frames, InjectionSpec, SyntheticTrafficSpec};

/// Benign Markov traffic over 10 ids.
pub fn benign_log(length: usize, seed: u64) -> Vec<CanFrame> {
    generate_benign(&SyntheticTrafficSpec::cyclic(10, 0.05, length, seed)).expect("valid spec")
}

/// Benign traffic with rate-1 injection over the middle third.
pub fn attack_log(length: usize, seed: u64) -> (Vec<CanFrame>, Vec<Label>) {
    let frames = benign_log(length, seed);
    let n = frames.len();
    let spec = InjectionSpec { seed, ..InjectionSpec::rpm_style(Pid::new("7FF").expect("valid id"), n / 3, 2 * n / 3) };
    inject_frames(&frames, &spec).expect("interval fits")
}

/// `n` values at 0.95 then `n` at 0.80, with a deterministic wobble.
pub fn two_level(n: usize) -> Vec<f64> {
    (0..2 * n)
        .map(|i| {
            let level = if i < n { 0.95 } else { 0.80 };
            level + 0.01 * (((i * 7919) % 13) as f64 / 6.0 - 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_sizes() {
        assert_eq!(benign_log(500, 1).len(), 500);
        let (frames, labels) = attack_log(600, 1);
        assert_eq!(frames.len(), 800);
        assert_eq!(labels.iter().filter(|l| l.is_injected()).count(), 200);
        assert_eq!(two_level(5).len(), 10);
    }
}
