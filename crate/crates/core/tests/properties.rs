use accelsim_core::conv::{
    case_occurrences, conv_dram_accesses, conv_eval, conv_sram_accesses, ConvMultipliers, Conventions, Variant,
};
use accelsim_core::oracle::{random_conv_instance, simulate_conv, ConvInstance};
use accelsim_core::simd::profile_for;
use accelsim_core::tiler::{generate_conv_tiling, generate_simd_tiling, validate_conv_tiling, validate_simd_tiling};
use accelsim_core::train::backward_conv_shapes;
use accelsim_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, max_dim: u64) -> ConvInstance {
    random_conv_instance(&mut ChaCha8Rng::seed_from_u64(seed), max_dim)
}

fn conv_shape() -> impl Strategy<Value = ConvShape> {
    (1..=3u64, 1..=24u64, 1..=24u64, 1..=32u64, 1..=32u64, 1..=5u64, 1..=3u64, any::<bool>())
        .prop_filter_map("window larger than input", |(n, ih, iw, ic, oc, k, s, bias)| {
            ConvShape::new(n, ih, iw, ic, oc, k, k, s, k / 2, k / 2, bias).ok()
        })
}

fn small_hw(wbuf_kb: u64) -> HardwareConfig {
    HardwareConfig {
        pe_rows: 8,
        pe_cols: 8,
        wbuf_bytes: wbuf_kb * 1024,
        bbuf_bytes: 4096,
        ibuf_bytes: 16 * 1024,
        obuf_bytes: 16 * 1024,
        vmem_bytes: 16 * 1024,
        imem_bytes: 32 * 1024,
        bw_w: 64,
        bw_i: 64,
        bw_o: 64,
        bw_v: 64,
        bits_weight: 16,
        bits_bias: 32,
        bits_ifmap: 16,
        bits_psum: 32,
        bits_simd_in: 32,
        bits_simd_out: 32,
        op_latency: OpLatency::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn occurrence_counts_partition_outer_tiles(seed in any::<u64>()) {
        let inst = instance(seed, 16);
        let m = ConvMultipliers::new(&inst.shape, &inst.tiling);
        let occ = case_occurrences(&m);
        prop_assert!(occ.iter().all(|&(_, o)| o >= 0));
        prop_assert_eq!(occ.iter().map(|&(_, o)| o).sum::<i128>(), m.m_outer as i128);
    }

    #[test]
    fn oracle_matches_with_prologue_and_epilogue(seed in any::<u64>()) {
        let inst = instance(seed, 10);
        let conv = Conventions { prologue_epilogue: true };
        let st = conv_eval(&inst.shape, &inst.tiling, &inst.hw, Variant::Full, conv);
        let tr = simulate_conv(&inst.shape, &inst.tiling, &inst.hw, conv);
        prop_assert!(tr.is_well_formed());
        prop_assert_eq!(tr.total_cycles, st.total_cycles);
        prop_assert_eq!(tr.compute_cycles, st.compute_cycles);
    }

    #[test]
    fn psum_traffic_bounds(seed in any::<u64>()) {
        let inst = instance(seed, 16);
        let s = &inst.shape;
        let m = ConvMultipliers::new(s, &inst.tiling);
        let d = conv_dram_accesses(s, &inst.tiling, &inst.hw);
        let sram = conv_sram_accesses(s, &inst.tiling, &inst.hw);
        let ofmap = s.ofmap_elems() * inst.hw.bits_psum;
        prop_assert!(sram.obuf >= ofmap);
        let reduce = m.outer.kh * m.outer.kw * m.outer.ic;
        let divides = s.oh.is_multiple_of(inst.tiling.outer.oh)
            && s.ow.is_multiple_of(inst.tiling.outer.ow)
            && s.n.is_multiple_of(inst.tiling.outer.n)
            && s.oc.is_multiple_of(inst.tiling.outer.oc);
        prop_assert!(d.psum_ofmap >= ofmap);
        if divides {
            prop_assert_eq!(d.psum_ofmap == ofmap, reduce == 1);
        }
    }

    #[test]
    fn variants_are_ordered(seed in any::<u64>()) {
        let inst = instance(seed, 16);
        let eval = |v| conv_eval(&inst.shape, &inst.tiling, &inst.hw, v, Conventions::default()).total_cycles;
        prop_assert!(eval(Variant::NoStall) <= eval(Variant::Simplified));
        prop_assert!(eval(Variant::Simplified) <= eval(Variant::Full));
    }

    #[test]
    fn more_bandwidth_never_slows_a_layer(seed in any::<u64>(), which in 0..3usize) {
        let inst = instance(seed, 16);
        let mut fast = inst.hw.clone();
        match which {
            0 => fast.bw_w *= 2,
            1 => fast.bw_i *= 2,
            _ => fast.bw_o *= 2,
        }
        let slow = conv_eval(&inst.shape, &inst.tiling, &inst.hw, Variant::Full, Conventions::default());
        let quick = conv_eval(&inst.shape, &inst.tiling, &fast, Variant::Full, Conventions::default());
        prop_assert!(quick.total_cycles <= slow.total_cycles);
        prop_assert_eq!(quick.dram_bits, slow.dram_bits);
    }

    #[test]
    fn generated_conv_tilings_fit(shape in conv_shape(), wbuf_kb in 1..=64u64) {
        let hw = small_hw(wbuf_kb);
        match generate_conv_tiling(&shape, &hw) {
            Ok(t) => {
                let report = validate_conv_tiling(&shape, &t.outer, &hw);
                prop_assert!(report.within_bounds && report.all_fit());
                prop_assert!(t.inner.ic <= hw.pe_rows && t.inner.oc <= hw.pe_cols);
            }
            Err(e) => {
                prop_assert!(e.is_infeasible());
                let report = validate_conv_tiling(&shape, &ConvTile::ones(), &hw);
                prop_assert!(!report.all_fit());
            }
        }
    }

    #[test]
    fn output_channel_tile_grows_with_weight_buffer(shape in conv_shape(), wbuf_kb in 1..=32u64) {
        let small = generate_conv_tiling(&shape, &small_hw(wbuf_kb));
        let large = generate_conv_tiling(&shape, &small_hw(wbuf_kb * 2));
        if let (Ok(a), Ok(b)) = (small, large) {
            prop_assert!(a.outer.oc <= b.outer.oc);
        }
    }

    #[test]
    fn generated_simd_tilings_fit(h in 1..=40u64, w in 1..=40u64, n in 1..=4u64, c in 1..=256u64, kind in 0..5usize) {
        let kind = [LayerKind::ReLU, LayerKind::TensorAdd, LayerKind::BatchNorm, LayerKind::BnBackward, LayerKind::ReluBackward][kind];
        let shape = SimdShape::new(h, w, n, c).unwrap();
        let p = profile_for(kind, &shape).unwrap();
        let hw = small_hw(16);
        if let Ok(t) = generate_simd_tiling(&p, &hw) {
            let report = validate_simd_tiling(&p, &t.outer, &hw);
            prop_assert!(report.within_bounds && report.all_fit());
        }
    }

    #[test]
    fn backward_shapes_are_consistent(shape in conv_shape()) {
        let (dx, dw) = backward_conv_shapes(&shape);
        prop_assert!(dx.validate("dx").is_ok());
        prop_assert!(dw.validate("dw").is_ok());
        prop_assert_eq!((dx.oh, dx.ow), (shape.effective_ih(), shape.effective_iw()));
        prop_assert_eq!((dw.oh, dw.ow, dw.oc), (shape.kh, shape.kw, shape.oc));
        // Dilation zeros are costed, so the gradients never get cheaper than the forward pass.
        prop_assert!(dw.macs() >= shape.macs());
        prop_assert!(dx.macs() >= shape.macs());
        if shape.stride == 1 {
            prop_assert_eq!(dw.macs(), shape.macs());
        }
    }

    #[test]
    fn network_json_round_trips(shape in conv_shape(), c in 1..=64u64) {
        let act = SimdShape::new(shape.oh, shape.ow, shape.n, shape.oc).unwrap();
        let net = vec![
            LayerSpec::conv("c", shape),
            LayerSpec::simd("bn", LayerKind::BatchNorm, act),
            LayerSpec::simd("r", LayerKind::ReLU, SimdShape::new(1, 1, 1, c).unwrap()),
        ];
        let text = network_to_json_string(&net);
        prop_assert_eq!(network_from_json_str(&text, "rt").unwrap(), net);
    }
}
