//! C-style number formatting for CSV output (`%.6e` and `%.17g`).

/// `printf("%.6e")`: six fractional digits and an exponent of at least two
/// digits, e.g. `1.234560e-07`.
pub fn sci6(x: f64) -> String {
    c_exp(x, 6)
}

fn c_exp(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return non_finite(x);
    }
    let s = format!("{:.*e}", prec, x);
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// `printf("%.17g")`: seventeen significant digits, fixed or exponential
/// notation by the C rule, trailing zeros removed.
pub fn g17(x: f64) -> String {
    const P: i32 = 17;
    if !x.is_finite() {
        return non_finite(x);
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let e = format!("{:.*e}", (P - 1) as usize, x);
    let exp: i32 = e.split_once('e').unwrap().1.parse().unwrap();
    if exp < -4 || exp >= P {
        let s = c_exp(x, (P - 1) as usize);
        let (m, ex) = s.split_once('e').unwrap();
        format!("{}e{}", trim_zeros(m), ex)
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn non_finite(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci6_matches_printf() {
        assert_eq!(sci6(0.0), "0.000000e+00");
        assert_eq!(sci6(1.0), "1.000000e+00");
        assert_eq!(sci6(-3.36e-7), "-3.360000e-07");
        assert_eq!(sci6(1.5e120), "1.500000e+120");
        assert_eq!(sci6(9.9999999e-5), "1.000000e-04");
    }

    #[test]
    fn g17_matches_printf() {
        assert_eq!(g17(0.0), "0");
        assert_eq!(g17(0.5), "0.5");
        assert_eq!(g17(-1.0 / 3.0), "-0.33333333333333331");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(123456.0), "123456");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(0.1), "0.10000000000000001");
    }

    #[test]
    fn g17_round_trips() {
        for &x in &[0.1, 2.0 / 3.0, 1e-300, 6.02214076e23, -7.25e-9] {
            assert_eq!(g17(x).parse::<f64>().unwrap(), x);
        }
    }
}
