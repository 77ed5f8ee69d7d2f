use std::path::{Path, PathBuf};

use dsrm::dsrm::{save_checkpoint, train, TrainConfig};
use dsrm::kg::save_kg;
use dsrm::miner::{mine_kg_pairs, mine_pairs, MinerConfig};
use dsrm::synth::{generate, SynthConfig};

/// Writes `kg.jsonl` and a small trained `model.ckpt` into `dir`.
pub fn trained_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let fx = generate(&SynthConfig::default()).unwrap();
    let dict = dsrm::kg::build_dictionary(&fx.train);
    let mut pairs = mine_pairs(&fx.train, &dict, &MinerConfig::default());
    pairs.extend(mine_kg_pairs(&fx.kg, 5, 0));
    let config = TrainConfig {
        hidden1: 8,
        hidden2: 8,
        output_dim: 6,
        learning_rate: 0.05,
        minibatch_size: 16,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (params, _) = train(&fx.kg, &pairs, &config).unwrap();
    let kg_path = dir.join("kg.jsonl");
    let model_path = dir.join("model.ckpt");
    save_kg(&fx.kg, &kg_path).unwrap();
    save_checkpoint(&model_path, &params, config.gamma, None).unwrap();
    (kg_path, model_path)
}
