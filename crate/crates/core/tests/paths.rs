use conemarket::samples::{k_decreasing_path, proper_cone, rng};
use conemarket::vector::neg;
use conemarket::{decompose, is_k_decreasing, total_variation, Cone, Error, GridPath};
use proptest::prelude::*;

fn cone_for(seed: u64, d: usize, orthant: bool) -> Cone {
    if orthant {
        Cone::orthant(d).unwrap()
    } else {
        proper_cone(&mut rng(seed ^ 0x9e37), d)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decomposition_of_k_decreasing_paths(
        seed in any::<u64>(),
        d in 2usize..=3,
        steps in 1usize..=10,
        orthant in any::<bool>(),
    ) {
        let k = cone_for(seed, d, orthant);
        let path = k_decreasing_path(&mut rng(seed), &k, steps).unwrap();
        let dec = decompose(&path, &k).unwrap();
        for zj in &dec.z {
            prop_assert!(zj.windows(2).all(|w| w[1] <= w[0]), "{zj:?}");
        }
        for (r, x) in dec.reconstruct().iter().zip(path.values()) {
            prop_assert!(rel_err(r, x) <= 1e-9);
        }
        for der in &dec.derivatives {
            prop_assert!(k.contains(&neg(&der.direction)).unwrap());
            prop_assert!((der.direction.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let tv = dec.variation.values();
        prop_assert!(tv.windows(2).all(|w| w[1][0] >= w[0][0]));
    }

    #[test]
    fn non_decreasing_step_is_reported(seed in any::<u64>(), steps in 2usize..=6) {
        let k = Cone::orthant(2).unwrap();
        let path = k_decreasing_path(&mut rng(seed), &k, steps).unwrap();
        let mut values = path.values().to_vec();
        let last = values.len() - 1;
        values[last] = values[last - 1].iter().map(|v| v + 1.0).collect();
        let bad = GridPath::new(path.times().to_vec(), values, false).unwrap();
        prop_assert!(!is_k_decreasing(&bad, &k).unwrap());
        prop_assert!(matches!(decompose(&bad, &k), Err(Error::NotKDecreasing(s)) if s == last));
    }
}

#[test]
fn variation_of_a_known_path() {
    let p = GridPath::on_unit_grid(
        vec![vec![0.0, 0.0], vec![-1.0, 0.5], vec![-1.0, 0.5], vec![-3.0, 1.0]],
        false,
    )
    .unwrap();
    let tv = total_variation(&p);
    let expected = [0.0, 1.5, 1.5, 4.0];
    for (v, e) in tv.values().iter().zip(expected) {
        assert_eq!(v[0], e);
    }
}
