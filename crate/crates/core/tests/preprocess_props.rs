use hieeg::montage::{align_layouts, Electrode, ElectrodeLayout};
use hieeg::preprocess::resample::{Resampler, KAISER_BETA};
use hieeg::preprocess::{average_reference, preprocess_recording, EegRecording, PreprocessConfig};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resampling_keeps_duration(from in 150u32..2049, n in 1usize..4000) {
        let r = Resampler::new(from, 200, KAISER_BETA);
        let out = r.apply(&vec![0.0; n]).len();
        prop_assert_eq!(out, r.output_len(n));
        let seconds_in = n as f64 / f64::from(from);
        let seconds_out = out as f64 / 200.0;
        prop_assert!((seconds_in - seconds_out).abs() <= 0.5 / 200.0);
    }

    #[test]
    fn rereference_is_a_projection(values in prop::collection::vec(-500.0f64..500.0, 3 * 40), rows in 1usize..4) {
        let cols = values.len() / 3;
        let mut a = Array2::from_shape_vec((3, cols), values).unwrap();
        a = a.slice(ndarray::s![..rows, ..]).to_owned();
        average_reference(&mut a);
        let once = a.clone();
        average_reference(&mut a);
        for (x, y) in once.iter().zip(a.iter()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        for c in 0..a.ncols() {
            prop_assert!(a.column(c).sum().abs() <= 1e-9);
        }
    }
}

#[test]
fn pipeline_output_is_reproducible() {
    let labels = ["Fz", "Cz", "Pz", "Oz"];
    let electrodes: Vec<Electrode> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| Electrode {
            label: l.to_string(),
            position: [0.0, i as f64 * 0.3 - 0.45, 0.9],
        })
        .collect();
    let layout = ElectrodeLayout::new("ref", electrodes).unwrap();
    let map = align_layouts(&layout, std::slice::from_ref(&layout), 2).unwrap();
    let rate = 500;
    let data = Array2::from_shape_fn((4, 3 * rate as usize), |(c, t)| {
        let s = t as f64 / f64::from(rate);
        (2.0 * std::f64::consts::PI * (7.0 + c as f64) * s).sin() * 20.0 + 3.0 * c as f64 + s
    });
    let rec = EegRecording::new(data, rate, labels.iter().map(|l| l.to_string()).collect()).unwrap();
    let cfg = PreprocessConfig::default();
    let (a, ma) = preprocess_recording(&rec, &map, "ref", &cfg).unwrap();
    let (b, mb) = preprocess_recording(&rec, &map, "ref", &cfg).unwrap();
    let bits = |r: &EegRecording| r.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ma, mb);
    assert_eq!(a.n_samples(), 600);
}
