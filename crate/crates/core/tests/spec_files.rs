use std::path::PathBuf;

use accelsim_core::network::{simulate_network, Mode, SimOptions};
use accelsim_core::*;

fn spec(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(rel)
}

const HW: [&str; 6] = ["HT1", "HT2", "HT3", "HI1", "HI2", "HI3"];

#[test]
fn hardware_files_load() {
    for name in HW {
        let hw = load_hardware_spec(spec(&format!("hw/{name}.json"))).unwrap();
        assert_eq!(hw.pe_rows, hw.pe_cols);
        let expect_bits = if name.starts_with("HT") { 16 } else { 8 };
        assert_eq!((hw.bits_weight, hw.bits_ifmap, hw.bits_psum), (expect_bits, expect_bits, 32));
    }
}

#[test]
fn resnet50_has_53_convolutions_and_one_fc() {
    let net = load_network_spec(spec("net/resnet50.json")).unwrap();
    let convs = net.iter().filter(|l| l.kind == LayerKind::Conv).count();
    let fcs = net.iter().filter(|l| l.kind == LayerKind::FC).count();
    assert_eq!((convs, fcs), (53, 1));
    let last = net.iter().rev().find(|l| l.kind == LayerKind::Conv).unwrap();
    assert_eq!(last.conv_shape().unwrap().oh, 7);
}

#[test]
fn resnet18_round_trips() {
    let net = load_network_spec(spec("net/resnet18.json")).unwrap();
    assert_eq!(net.iter().filter(|l| l.kind.is_conv_family()).count(), 21);
    let text = network_to_json_string(&net);
    assert_eq!(network_from_json_str(&text, "rt").unwrap(), net);
}

#[test]
fn smoke_network_reproduces_example_conv() {
    let hw = load_hardware_spec(spec("hw/smoke_4x4.json")).unwrap();
    let net = load_network_spec(spec("net/smoke.json")).unwrap();
    let st = simulate_network(&net, &hw, Mode::Inference, SimOptions::default()).unwrap();
    assert_eq!(st.layers[0].stats.total_cycles, 660);
    assert_eq!(st.layers.len(), net.len());
}

#[test]
fn resnet50_runs_on_every_config() {
    let net = load_network_spec(spec("net/resnet50.json")).unwrap();
    for name in HW {
        let hw = load_hardware_spec(spec(&format!("hw/{name}.json"))).unwrap();
        let (mode, batch) = if name.starts_with("HT") { (Mode::Training, 32) } else { (Mode::Inference, 1) };
        let st = simulate_network(&with_batch(&net, batch), &hw, mode, SimOptions::default())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(st.l_total > 0);
    }
}

#[test]
fn backend_example_loads() {
    let bc = accelsim_core::energy::load_backend(spec("backend/example_placeholder.json")).unwrap();
    assert!(bc.note.unwrap().starts_with("PLACEHOLDER"));
}
