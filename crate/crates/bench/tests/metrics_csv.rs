use bench::{from_csv, to_csv, InstanceMetrics, Metrics, TransferSample};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,8}"
}

fn instance() -> impl Strategy<Value = InstanceMetrics> {
    (name(), prop_oneof![Just("low"), Just("high")], 1u32..8, 0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40, any::<u64>())
        .prop_map(|(name, p, queues, tasks, start, len, digest)| InstanceMetrics {
            name,
            priority: p.into(),
            queues,
            tasks,
            start_ns: start,
            end_ns: start + len,
            digest,
        })
}

fn metrics() -> impl Strategy<Value = Metrics> {
    (
        name(),
        prop::collection::vec(instance(), 0..4),
        prop::collection::vec(0u64..1 << 40, 0..4),
        prop::collection::vec(0u64..1 << 20, 0..6),
        prop::collection::vec((1u64..1 << 30, 1u64..1 << 30, 1u64..1 << 30), 0..3),
        (0u64..1 << 40, 0u64..1 << 20, 0u64..1 << 40, 0u64..1 << 40),
    )
        .prop_map(|(workload, instances, busy, issue, transfers, (makespan, migrations, moved, wall))| Metrics {
            workload,
            clock: "virtual".into(),
            mode: "shared".into(),
            tasks: instances.iter().map(|i| i.tasks).sum(),
            instances,
            makespan_ns: makespan,
            device_busy_ns: busy,
            migrations,
            bytes_moved: moved,
            issue_ns: issue,
            transfers: transfers
                .into_iter()
                .map(|(bytes, staged_ns, direct_ns)| TransferSample {
                    bytes,
                    staged_ns,
                    direct_ns,
                })
                .collect(),
            wall_ns: wall,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn csv_round_trips(m in metrics()) {
        let text = to_csv(&m);
        prop_assert_eq!(from_csv(&text).unwrap(), m.clone());
        // same column count on every line
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        prop_assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }
}
