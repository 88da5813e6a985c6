use proptest::prelude::*;
use proq::latent::QuasimetricHead;
use proq::nn::{rng_stream, Matrix, Mlp};
use proq::orchestrator::model::dhead_spec;

fn head(seed: u64) -> QuasimetricHead<f32> {
    let mut rng = rng_stream(seed, 0);
    QuasimetricHead::new(Mlp::init(dhead_spec(vec![32, 32], 64), &mut rng).unwrap(), 0.0, 8).unwrap()
}

fn latent() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-5.0f32..5.0, 16)
}

proptest! {
    #[test]
    fn axioms_hold(seed in 0u64..4, x in latent(), y in latent(), z in latent()) {
        let h32 = head(seed);
        let h = h32.cast::<f64>();
        let e = h.embed(&Matrix::from_rows(&[&x, &y, &z]).cast()).unwrap();
        let d = |i: usize, j: usize| h.distance_embedded(e.row(i), e.row(j));
        for i in 0..3 {
            prop_assert_eq!(d(i, i), 0.0);
            for j in 0..3 {
                prop_assert!(d(i, j) >= 0.0);
                for k in 0..3 {
                    prop_assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-9);
                }
            }
        }
        // the f32 head agrees and is exactly zero on the diagonal
        let e32 = h32.embed(&Matrix::from_rows(&[&x, &y])).unwrap();
        prop_assert_eq!(h32.distance_embedded(e32.row(0), e32.row(0)), 0.0);
        let d32 = h32.distance_embedded(e32.row(0), e32.row(1)) as f64;
        prop_assert!((d32 - d(0, 1)).abs() <= 1e-4 * (1.0 + d(0, 1)));
    }

    #[test]
    fn fast_paths_agree(seed in 0u64..4, rows in prop::collection::vec(latent(), 2..6)) {
        let h = head(seed);
        let e = h.embed(&Matrix::from_rows(&rows)).unwrap();
        let n = rows.len();
        let all = h.distance_matrix(&e);
        for i in 0..n {
            for j in 0..n {
                let direct = h.distance_embedded(e.row(i), e.row(j));
                prop_assert!((all[i * n + j] - direct).abs() <= 1e-5 * (1.0 + direct.abs()));
            }
        }
    }
}

#[test]
fn mixing_weight_moves_between_mean_and_max() {
    let mut h = head(9).cast::<f64>();
    let e = h.embed(&Matrix::from_rows(&[vec![1.0; 16], vec![-1.0; 16]])).unwrap();
    h.alpha_raw = -40.0;
    let mean = h.distance_embedded(e.row(0), e.row(1));
    h.alpha_raw = 40.0;
    let max = h.distance_embedded(e.row(0), e.row(1));
    assert!(max >= mean);
}
