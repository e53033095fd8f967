use std::collections::BTreeSet;

use proptest::prelude::*;
use wgtune::datastore::*;
use wgtune::space::{RefusedRecord, SampleTable};
use wgtune::WorkgroupSize;

/// A runtime with exactly nine significant digits.
fn runtime() -> impl Strategy<Value = f64> {
    (100_000_000u64..1_000_000_000, -6i32..6).prop_map(|(m, e)| {
        format!("{m}e{}", e - 8).parse().unwrap()
    })
}

fn table_strategy() -> impl Strategy<Value = SampleTable> {
    prop::collection::btree_map(
        (0u8..6, 1u32..40, 1u32..40),
        prop::collection::vec(runtime(), 1..5),
        1..25,
    )
    .prop_map(|cases| {
        let mut t = SampleTable::new();
        for ((s, c, r), rts) in cases {
            let id = format!("dev-{s}/kern/512x512/FLOAT32-FLOAT32");
            t.insert(&id, WorkgroupSize::new(2 * c, 2 * r), rts).unwrap();
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sample_tables_round_trip(table in table_strategy()) {
        let mut first = Vec::new();
        write_samples(&table, &mut first).unwrap();
        let back = read_samples(first.as_slice()).unwrap();
        prop_assert_eq!(&back, &table);
        let mut second = Vec::new();
        write_samples(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn refused_records_round_trip(
        rec in prop::collection::btree_map(0u8..5, prop::collection::btree_set((1u32..30, 1u32..30), 0..6), 0..5),
    ) {
        let record: RefusedRecord = rec
            .into_iter()
            .map(|(s, sizes)| {
                let sizes: BTreeSet<WorkgroupSize> = sizes.into_iter().map(|(c, r)| WorkgroupSize::new(2 * c, 2 * r)).collect();
                (format!("d/k{s}/64x64/INT32-INT32"), sizes)
            })
            .filter(|(_, sizes)| !sizes.is_empty())
            .collect();
        let mut buf = Vec::new();
        write_refused(&record, &mut buf).unwrap();
        prop_assert_eq!(read_refused(buf.as_slice()).unwrap(), record);
    }

    #[test]
    fn arbitrary_floats_round_trip(rts in prop::collection::vec(1e-300f64..1e300, 1..20)) {
        let mut t = SampleTable::new();
        t.insert("a/b/64x64/INT32-INT32", WorkgroupSize::new(2, 2), rts).unwrap();
        let mut buf = Vec::new();
        write_samples(&t, &mut buf).unwrap();
        prop_assert_eq!(read_samples(buf.as_slice()).unwrap(), t);
    }
}

#[test]
fn files_on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = SampleTable::new();
    t.insert("x/y/512x512/INT32-INT32", WorkgroupSize::new(4, 2), vec![1.23456789, 2.0]).unwrap();
    let path = dir.path().join("s.csv");
    save_samples(&t, &path).unwrap();
    assert_eq!(load_samples(&path).unwrap(), t);
}
