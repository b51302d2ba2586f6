//! Training the [3, 6, 3, 1] tanh network on the desk-scale dataset.

use pvann_core::ann::{train, validate, ActivationKind, MlpNetwork, TrainConfig, TrainSample, DEFAULT_LAYER_SIZES};
use pvann_core::dataset::{self, GridSpec, NormalizationParams, Split};
use pvann_core::mppt::AnnController;
use pvann_core::panel::PanelSpec;

struct Desk {
    train: Vec<TrainSample>,
    validation: Vec<TrainSample>,
    norm: NormalizationParams,
}

fn desk() -> Desk {
    let records = dataset::generate(&PanelSpec::yl150p_17b(), &GridSpec::desk()).unwrap();
    let split = dataset::split(records.len(), 0.7, 1).unwrap();
    let train = Split::select(&split.train, &records);
    let norm = NormalizationParams::fit(&train).unwrap();
    let samples = |idx: &[usize]| {
        idx.iter()
            .map(|&i| {
                let (x, y) = norm.normalize(&records[i]);
                TrainSample {
                    input: x.to_vec(),
                    desired: vec![y],
                }
            })
            .collect::<Vec<_>>()
    };
    Desk {
        train: samples(&split.train),
        validation: samples(&split.validation),
        norm,
    }
}

fn trained(data: &Desk, learning_rate: f64) -> (MlpNetwork, Vec<f64>) {
    let mut net =
        MlpNetwork::initialized(&DEFAULT_LAYER_SIZES, ActivationKind::Tanh, ActivationKind::Tanh, 1).unwrap();
    let config = TrainConfig {
        learning_rate,
        epochs: 14,
        ..Default::default()
    };
    let history = train(&mut net, &data.train, &config).unwrap().history;
    (net, history)
}

#[test]
fn default_rate_descends_and_lands_in_the_reported_band() {
    let data = desk();
    let (net, history) = trained(&data, TrainConfig::default().learning_rate);
    assert_eq!(history.len(), 14);
    assert!(history[..5].windows(2).all(|w| w[1] < w[0]), "{history:?}");
    let report = validate(&net, &data.validation).unwrap();
    assert!(report.mse_percent <= 0.86, "{}", report.mse_percent);
}

#[test]
fn controller_reproduces_training_labels() {
    let data = desk();
    let (net, _) = trained(&data, 0.05);
    let ctl = AnnController::new(net, data.norm).unwrap();
    let rows: Vec<&TrainSample> = data.train.iter().step_by(7).collect();
    let close = rows
        .iter()
        .filter(|s| {
            let r = data.norm.denormalize([s.input[0], s.input[1], s.input[2]], s.desired[0]);
            let out = ctl.duty(r.irradiance, r.temperature, r.load_resistance).unwrap();
            (out.duty - r.duty_cycle).abs() < 0.002
        })
        .count();
    assert!(close as f64 >= 0.8 * rows.len() as f64, "{close} of {}", rows.len());

    // Envelope floor with a low load sits in the widely spread low-duty region.
    let floor = ctl.duty(100.0, 25.0, 1.0).unwrap();
    assert!((0.2..=0.6).contains(&floor.duty), "{}", floor.duty);
    assert!(!floor.out_of_envelope);
}
