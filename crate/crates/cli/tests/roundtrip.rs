use ndarray::Array2;
use otdual_cli::io::{format_matrix, format_pgm, format_real, format_vector, parse_matrix, parse_pgm, parse_vector, Pgm};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits).prop_filter("finite", |x| x.is_finite())
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reals_survive_formatting(x in finite()) {
        let back: f64 = format_real(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn vectors_round_trip(v in prop::collection::vec(finite(), 1..40)) {
        let back = parse_vector(&format_vector(&v), "v").unwrap();
        prop_assert!(same_bits(&back, &v));
    }

    #[test]
    fn matrices_round_trip(rows in 1usize..8, cols in 1usize..8, seed in prop::collection::vec(finite(), 64)) {
        let m = Array2::from_shape_fn((rows, cols), |(i, j)| seed[i * 8 + j]);
        let back = parse_matrix(&format_matrix(&m), "m").unwrap();
        prop_assert_eq!(back.dim(), m.dim());
        prop_assert!(same_bits(back.as_slice().unwrap(), m.as_slice().unwrap()));
    }

    #[test]
    fn pgm_round_trip(w in 1usize..12, h in 1usize..12, maxval in 1u32..=65535, seed in any::<u64>()) {
        let pixels = (0..w * h).map(|k| ((seed.rotate_left(k as u32 % 64) ^ k as u64) % (maxval as u64 + 1)) as u32).collect();
        let img = Pgm { width: w, height: h, maxval, pixels };
        prop_assert_eq!(parse_pgm(&format_pgm(&img), "img").unwrap(), img);
    }
}

#[test]
fn comments_and_blank_lines_are_skipped() {
    let v = parse_vector("# header\n\n1.5  # inline\n  -2e-3\n", "v").unwrap();
    assert_eq!(v, vec![1.5, -2e-3]);
    let img = parse_pgm("P2\n# made by hand\n2 1 # size\n9\n0 9\n", "img").unwrap();
    assert_eq!(img.pixels, vec![0, 9]);
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(parse_vector("1\nabc\n", "v").is_err());
    assert!(parse_vector("inf\n", "v").is_err());
    assert!(parse_vector("# nothing\n", "v").is_err());
    assert!(parse_matrix("1,2\n3\n", "m").is_err());
    assert!(parse_pgm("P5\n1 1\n255\n0\n", "img").is_err());
    assert!(parse_pgm("P2\n2 2\n255\n0 1 2\n", "img").is_err());
    assert!(parse_pgm("P2\n1 1\n10\n11\n", "img").is_err());
}

#[test]
fn quantization_maps_the_peak_to_maxval() {
    let img = Pgm::quantize(&[0.0, 0.25, 0.5], 1, 3, 100).unwrap();
    assert_eq!(img.pixels, vec![0, 50, 100]);
}
