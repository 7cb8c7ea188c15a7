use tlh_core::eval::mean_average_precision;
use tlh_core::synthetic::{generate, SyntheticConfig, SyntheticDataset};
use tlh_core::trainer::train;
use tlh_core::{Architecture, BitCode, CodeDatabase, EncoderParams, TrainConfig};

fn small_data() -> SyntheticDataset {
    generate(&SyntheticConfig {
        classes: 4,
        dim: 16,
        train: 400,
        query: 60,
        database: 600,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn map_of(params: &EncoderParams, data: &SyntheticDataset) -> f64 {
    let db_codes: Vec<BitCode> = (0..data.database.features.rows())
        .map(|i| params.encode(data.database.features.row(i)).unwrap())
        .collect();
    let db = CodeDatabase::build(&db_codes, data.database.labels.ids().to_vec()).unwrap();
    let queries: Vec<(u64, BitCode)> = (0..data.query.features.rows())
        .map(|i| {
            let id = data.query.labels.ids()[i];
            (id, params.encode(data.query.features.row(i)).unwrap())
        })
        .collect();
    let store = data.query.labels.merge(&data.database.labels).unwrap();
    mean_average_precision(&db, &queries, &store, db.len())
        .unwrap()
        .map
}

fn config() -> TrainConfig {
    let mut cfg = TrainConfig::new(8, 20_000, 20_000);
    cfg.epochs = 15;
    cfg.learning_rate = 0.07;
    cfg.lr_decay_factor = 1.0;
    cfg.alpha = 4.0;
    cfg.lambda = 10.0;
    cfg
}

#[test]
fn training_improves_retrieval() {
    let data = small_data();
    let init = EncoderParams::init(Architecture::Linear, 16, 0, 8, 1).unwrap();
    let before = map_of(&init, &data);
    let (trained, report) = train(&data.train.features, &data.train.labels, &config(), &init).unwrap();
    assert_eq!(report.epochs.len(), 15);
    let after = map_of(&trained, &data);
    assert!(after > before + 0.2, "MAP {before} -> {after}");
}

#[test]
fn training_is_reproducible() {
    let data = small_data();
    let init = EncoderParams::init(Architecture::Mlp1, 16, 12, 8, 3).unwrap();
    let mut cfg = config();
    cfg.epochs = 3;
    let (a, ra) = train(&data.train.features, &data.train.labels, &cfg, &init).unwrap();
    let (b, rb) = train(&data.train.features, &data.train.labels, &cfg, &init).unwrap();
    assert_eq!(a, b);
    let strip = |r: &tlh_core::TrainReport| {
        r.epochs.iter().map(|e| (e.nll_mean, e.qerr_mean)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&ra), strip(&rb));

    let mut bytes = Vec::new();
    a.write_checkpoint(&mut bytes).unwrap();
    let back = EncoderParams::read_checkpoint(&mut bytes.as_slice()).unwrap();
    assert_eq!(back, a);
}
