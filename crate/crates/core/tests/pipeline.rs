use cadesh::eval::evaluate;
use cadesh::ingest::{ingest, write_dataset, IngestOptions};
use cadesh::synth::{generate, SynthConfig};
use cadesh::{pipeline, PipelineConfig, StageTimings};

fn synthetic_partitions(seed: u64) -> cadesh::ingest::Partitions {
    let sc = SynthConfig::desk_scale(seed);
    let flows = generate(&sc).unwrap();
    let mut csv = Vec::new();
    write_dataset(&flows, &mut csv).unwrap();
    let opts = IngestOptions { use_partition_column: true, lab: sc.lab(), ..Default::default() };
    ingest(csv.as_slice(), &opts).unwrap().0
}

#[test]
fn synthetic_end_to_end_with_defaults() {
    let parts = synthetic_partitions(11);
    let config = PipelineConfig::default();
    let model = pipeline::fit(&parts.training, &parts.validation, &config, &mut StageTimings::default()).unwrap();
    let report = evaluate(&model, &parts.test).unwrap().report;
    println!("{}", report.to_json());
    assert!(report.macro_avg.recall.unwrap() >= 0.95);
    assert!(report.macro_avg.fpr.unwrap() <= 0.05);
}
