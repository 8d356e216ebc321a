use mhqg_core::corpus::synthetic::{generate_examples, SyntheticConfig};
use mhqg_core::corpus::{build_vocabulary, encode_example, filter_examples, SplitRecord};
use mhqg_core::reward::{
    evaluate_reward_model, prepare_examples, train_reward_model, RewardCheckpoint, RewardModel, RewardModelConfig,
    RewardTrainConfig,
};

#[test]
fn reward_network_memorises_fifty_examples() {
    let (examples, _) =
        filter_examples(generate_examples(&SyntheticConfig { examples: 50, seed: 9, ..Default::default() }));
    let vocab = build_vocabulary(&examples, 1000).unwrap();
    let records: Vec<SplitRecord> = examples
        .into_iter()
        .map(|e| {
            let encoded = encode_example(&e, &vocab).unwrap();
            SplitRecord { example: e, encoded }
        })
        .collect();
    let cfg = RewardModelConfig {
        word_dim: 16,
        char_dim: 4,
        char_filters: 8,
        char_width: 3,
        max_word_chars: 10,
        hidden: 12,
        contextual: true,
    };
    let model = RewardModel::new(cfg, &vocab, RewardModel::char_inventory(vocab.tokens()), 2);
    let train = prepare_examples(&model, &vocab, &records);
    let tcfg = RewardTrainConfig { epochs: 35, batch_size: 8, learning_rate: 5e-3, ..Default::default() };
    let state =
        train_reward_model(RewardCheckpoint::new(model, String::new()), &train, &train, &tcfg, |_| Ok(())).unwrap();
    let (f1, _) = evaluate_reward_model(&state.best, &train).unwrap();
    assert_eq!(f1, 1.0);
}
