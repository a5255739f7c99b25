use proptest::prelude::*;
use rescast::csvio::{read_targets, read_tasks, write_targets, write_tasks, TargetRow, TaskSchema};
use rescast_core::ingest::{Dataset, LabeledTask, TaskRecord};
use rescast_core::{ResourceClasses, ResourceTargets};

fn task() -> impl Strategy<Value = (TaskRecord, Option<[u8; 4]>)> {
    (
        "[a-z]{1,6}",
        "[A-Za-z ,\"]{1,8}",
        1u32..128,
        0u64..50,
        0u64..40,
        any::<u64>(),
        proptest::option::of((0u8..4, 0u8..5, 0u8..2, 0u8..5)),
    )
        .prop_map(|(pt, fw, cores, n_input, extra, n_events, c)| {
            let task = TaskRecord {
                task_id: String::new(),
                processing_type: pt,
                framework: fw,
                core_count: cores,
                n_input,
                n_files: n_input + extra,
                n_events,
            };
            (task, c.map(|(a, b, c, d)| [a, b, c, d]))
        })
}

proptest! {
    #[test]
    fn task_csv_round_trip(rows in proptest::collection::vec(task(), 0..40), all_labeled in any::<bool>()) {
        let records: Vec<LabeledTask> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (mut task, c))| {
                task.task_id = format!("task-{i}");
                let c = if all_labeled { Some(c.unwrap_or([0; 4])) } else { c };
                LabeledTask { task, classes: c.map(|[ram, cpu, io, wall]| ResourceClasses { ram, cpu, io, wall }) }
            })
            .collect();
        let ds = Dataset::new(records).unwrap();
        let mut buf = Vec::new();
        write_tasks(&mut buf, &ds).unwrap();
        let parsed = read_tasks(buf.as_slice(), &TaskSchema::default()).unwrap();
        prop_assert!(parsed.report.errors.is_empty());
        prop_assert_eq!(&parsed.dataset.records, &ds.records);
        prop_assert_eq!(&parsed.dataset.vocabularies, &ds.vocabularies);
    }

    #[test]
    fn target_csv_round_trip_is_bit_exact(values in proptest::collection::vec((0.0f64..1e12, 0.0f64..1e9, 0.0f64..1e10, 60.0f64..3e6, any::<bool>()), 0..30)) {
        let rows: Vec<TargetRow> = values
            .iter()
            .enumerate()
            .map(|(i, &(r, c, io, w, f))| TargetRow {
                task_id: format!("t{i}"),
                targets: ResourceTargets { ram_count: r, cpu_time: c, io_intensity: io, walltime: w },
                cpu_filter_fallback: f,
            })
            .collect();
        let mut buf = Vec::new();
        write_targets(&mut buf, &rows).unwrap();
        let (back, report) = read_targets(buf.as_slice()).unwrap();
        prop_assert!(report.errors.is_empty());
        prop_assert_eq!(back, rows);
    }
}
