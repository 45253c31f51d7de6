use super::Rgb;

/// BT.709 full-range luma of one color, in `[0, 255]`.
///
/// Evaluated as an exact integer sum over a fixed denominator so the
/// coefficients sum to exactly one: white maps to 255.0, not 254.99...
#[inline]
pub fn y_value(c: Rgb) -> f64 {
    let num = 2126 * c[0] as u32 + 7152 * c[1] as u32 + 722 * c[2] as u32;
    num as f64 / 10_000.0
}

pub fn y_channel(colors: &[Rgb]) -> Vec<f64> {
    colors.iter().map(|&c| y_value(c)).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(y_value([255, 255, 255]), 255.0);
        assert_eq!(y_value([0, 0, 0]), 0.0);
        assert_eq!(y_value([255, 0, 0]), 54.213);
        assert!((y_value([255, 0, 0]) - 0.2126 * 255.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(c in prop::array::uniform3(any::<u8>()), ch in 0usize..3) {
            let y = y_value(c);
            prop_assert!((0.0..=255.0).contains(&y));
            if c[ch] < 255 {
                let mut brighter = c;
                brighter[ch] += 1;
                prop_assert!(y_value(brighter) > y);
            }
        }
    }
}
