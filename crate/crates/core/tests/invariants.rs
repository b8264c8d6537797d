use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use meg_core::channel::transmission_time;
use meg_core::content::{ContentGrid, LatentSeed, PayloadKind, ProtocolId, SeedKind, TextPrompt};
use meg_core::metrics::mse;
use meg_core::pipeline::{Pipeline, PipelineParams};
use meg_core::protocol::{build_plan, PayloadSizes, PlanSettings, UplinkMode};
use meg_core::report::fmt_g;
use meg_core::sim::{simulate, Job, Resource, Site, Task};
use meg_core::ChannelSpec;

const D: usize = 16;
const H: usize = 16;
const W: usize = 16;
const K: usize = 4;

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let mut params = PipelineParams::new(D, H, W, K, 77).with_es_count(4);
        params.text_mix_weight = 0.0;
        Pipeline::build(params).unwrap()
    })
}

fn task(values: Vec<f64>) -> LatentSeed {
    LatentSeed::new(values, SeedKind::TaskSeed, 32).unwrap()
}

fn content(values: Vec<f64>) -> LatentSeed {
    LatentSeed::new(values, SeedKind::ContentSeed, 32).unwrap()
}

fn prompt() -> TextPrompt {
    TextPrompt {
        text: String::new(),
        embedding: vec![0.0; pipeline().params().text_dim],
        payload_bits: 8,
    }
}

fn latent() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, D)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_then_infer_recovers_latent(z in latent()) {
        let p = pipeline();
        let x = p.decode(&content(z.clone())).unwrap();
        let back = p.infer(&x, &prompt()).unwrap();
        for (a, b) in back.values().iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn decode_preserves_energy(z in latent()) {
        let x = pipeline().decode(&content(z.clone())).unwrap();
        let centred: Vec<f64> = x.values().iter().map(|v| v - 0.5).collect();
        prop_assert!((norm(&centred) - norm(&z)).abs() <= 1e-9);
    }

    #[test]
    fn generators_are_orthogonal(z in latent(), es in prop::option::of(0usize..4)) {
        let out = pipeline().generate(&task(z.clone()), es).unwrap();
        prop_assert!((out.norm() - norm(&z)).abs() <= 1e-9);
    }

    #[test]
    fn cooperative_generation_is_exact(z in latent(), parts in 1usize..=D) {
        let p = pipeline();
        let seed = task(z);
        let whole = p.decode(&p.generate(&seed, None).unwrap()).unwrap();
        let partials: Vec<_> = p
            .split_seed(&seed, parts)
            .unwrap()
            .iter()
            .map(|s| p.partial_generate(s).unwrap())
            .collect();
        let merged = p.merge_partials(&partials).unwrap();
        for (a, b) in merged.values().iter().zip(whole.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn tiles_stitch_to_whole_sketch(z in latent(), tiles in 1usize..=H / K) {
        let p = pipeline();
        let seed = content(z);
        let whole = p.sketch(&seed).unwrap();
        let parts: Vec<_> = (0..tiles).map(|i| p.partial_sketch(&seed, i, tiles).unwrap()).collect();
        let stitched = p.stitch_tiles(&parts).unwrap();
        prop_assert_eq!(stitched.values(), whole.values());
    }

    #[test]
    fn decode_noise_law(z in latent(), n in latent()) {
        let p = pipeline();
        let clean = p.decode(&content(z.clone())).unwrap();
        let noisy_z: Vec<f64> = z.iter().zip(&n).map(|(a, b)| a + b).collect();
        let noisy = p.decode(&content(noisy_z)).unwrap();
        let expected = n.iter().map(|v| v * v).sum::<f64>() / (H * W) as f64;
        prop_assert!((mse(noisy.values(), clean.values()) - expected).abs() <= 1e-9);
    }

    #[test]
    fn sub_seed_bits_add_up(seed_bits in 1u64..10_000_000, s in 2usize..=D, unicast in any::<bool>()) {
        let mut params = PipelineParams::new(D, H, W, K, 1);
        params.bits_per_feature = 32;
        let sizes = PayloadSizes { image_bits: 1000, seed_bits, text_bits: 10, sketch_bits: 100 };
        let mode = if unicast { UplinkMode::Unicast } else { UplinkMode::Broadcast };
        let plan = build_plan(ProtocolId::Uidcg, &PlanSettings::new(&params, s, sizes, mode)).unwrap();
        let total: u64 = plan
            .transmits()
            .filter(|(_, t)| t.payload.kind == PayloadKind::SubSeed)
            .map(|(_, t)| t.payload.bits)
            .sum();
        prop_assert_eq!(total, seed_bits);
    }

    #[test]
    fn tile_bits_add_up(sketch_bits in 1u64..10_000_000, s in 2usize..=H / K) {
        let params = PipelineParams::new(D, H, W, K, 1);
        let sizes = PayloadSizes { image_bits: 1000, seed_bits: 10, text_bits: 10, sketch_bits };
        let plan = build_plan(ProtocolId::Dcsuc, &PlanSettings::new(&params, s, sizes, UplinkMode::Broadcast)).unwrap();
        let total: u64 = plan
            .transmits()
            .filter(|(_, t)| t.payload.kind == PayloadKind::SketchTile)
            .map(|(_, t)| t.payload.bits)
            .sum();
        prop_assert_eq!(total, sketch_bits);
    }

    #[test]
    fn seed_dump_round_trips(z in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..40)) {
        let seed = content(z);
        let mut buf = Vec::new();
        seed.write_dump(&mut buf).unwrap();
        let back = LatentSeed::read_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(back, seed);
    }

    #[test]
    fn grid_values_survive_pgm_quantisation(v in prop::collection::vec(0.0..=1.0f64, H * W)) {
        let grid = ContentGrid::new(H, W, v, 8).unwrap();
        let mut buf = Vec::new();
        grid.write_pgm(&mut buf, meg_core::content::PgmFormat::P5).unwrap();
        let back = meg_core::content::read_pgm(&buf, 8).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn g_format_keeps_nine_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_g(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-9);
    }

    #[test]
    fn transmission_time_grows_with_bits(bits in 1u64..1_000_000_000, snr in -30.0..30.0f64) {
        let spec = ChannelSpec::new(snr, 1e6);
        prop_assert!(transmission_time(bits, &spec).unwrap() < transmission_time(bits + 1, &spec).unwrap());
    }

    #[test]
    fn schedules_respect_resources_and_dependencies(
        jobs in prop::collection::vec(
            (0.0..5.0f64, prop::collection::vec((0usize..4, 0.0..2.0f64, any::<u8>()), 1..8)),
            1..6,
        )
    ) {
        let resources = [Resource::Device(Site::Ue), Resource::Device(Site::Es(0)), Resource::Broadcast,
            Resource::Link { es: 0, direction: meg_core::sim::Direction::Uplink }];
        let jobs: Vec<Job> = jobs
            .into_iter()
            .map(|(arrival, tasks)| Job {
                arrival,
                tasks: tasks
                    .into_iter()
                    .enumerate()
                    .map(|(i, (r, duration, mask))| Task {
                        resource: resources[r],
                        duration,
                        depends_on: (0..i).filter(|j| mask & (1 << (j % 8)) != 0).collect(),
                    })
                    .collect(),
            })
            .collect();
        let timings = simulate(&jobs).unwrap();
        let mut busy: BTreeMap<Resource, Vec<(f64, f64)>> = BTreeMap::new();
        for (job, timing) in jobs.iter().zip(&timings) {
            for (task, t) in job.tasks.iter().zip(&timing.tasks) {
                prop_assert!(t.ready >= job.arrival && t.start >= t.ready);
                prop_assert!((t.end - t.start - task.duration).abs() <= 1e-12);
                for &d in &task.depends_on {
                    prop_assert!(t.ready >= timing.tasks[d].end);
                }
                prop_assert!(timing.completion >= t.end);
                busy.entry(task.resource).or_default().push((t.start, t.end));
            }
        }
        for spans in busy.values_mut() {
            spans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            for w in spans.windows(2) {
                prop_assert!(w[1].0 >= w[0].1);
            }
        }
    }
}
