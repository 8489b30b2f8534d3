// Shared by the oracle and the simulated MU so both produce identical bits.

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn tanh(x: f32) -> f32 {
    x.tanh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(sigmoid(0.0), 0.5);
        for x in [-8.0f32, -1.0, 0.3, 7.5] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
            let t = tanh(x);
            assert!(t > -1.0 && t < 1.0);
        }
        // saturates without producing NaN
        assert_eq!(sigmoid(-200.0), 0.0);
        assert_eq!(sigmoid(200.0), 1.0);
    }
}
