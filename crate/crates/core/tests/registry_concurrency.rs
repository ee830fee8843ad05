use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use proptest::prelude::*;
use rover_esb::registry::RegistryError;
use rover_esb::{OperationSignature, ProtocolKind, Registry, ServiceDescriptor, ServiceStatus};

fn descriptor(service: &str, ops: &[&str], tag: u64) -> ServiceDescriptor {
    ServiceDescriptor::new(
        service,
        ProtocolKind::Rest,
        "127.0.0.1:9",
        ops.iter()
            .map(|o| OperationSignature::new(*o, format!("rev {tag}")))
            .collect(),
    )
}

#[test]
fn readers_never_see_a_half_applied_update() {
    let registry = Arc::new(Registry::new());
    registry.publish(descriptor("Svc", &["Alpha", "Beta"], 0)).unwrap();
    let stop = Arc::new(AtomicBool::new(false));

    let writers: Vec<_> = (0..4)
        .map(|w| {
            let registry = Arc::clone(&registry);
            thread::spawn(move || {
                for i in 0..500u64 {
                    registry.publish(descriptor("Svc", &["Alpha", "Beta"], w * 1000 + i)).unwrap();
                }
            })
        })
        .collect();
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let registry = Arc::clone(&registry);
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                let mut seen = 0u64;
                let mut last_version = 0;
                while !stop.load(Ordering::Relaxed) {
                    let r = registry.lookup_by_operation("Alpha").unwrap();
                    // Both operations of the snapshot carry the same revision.
                    let beta = r.service.operation("Beta").unwrap();
                    assert_eq!(r.operation.description, beta.description);
                    // Versions only move forward for a given reader.
                    assert!(r.service.version >= last_version);
                    last_version = r.service.version;
                    seen += 1;
                }
                seen
            })
        })
        .collect();

    for w in writers {
        w.join().unwrap();
    }
    stop.store(true, Ordering::Relaxed);
    for r in readers {
        assert!(r.join().unwrap() > 0);
    }
    assert_eq!(registry.describe("Svc").unwrap().version, 1 + 4 * 500);
}

#[test]
fn contested_operation_has_exactly_one_owner() {
    let registry = Arc::new(Registry::new());
    let outcomes: Vec<_> = (0..16)
        .map(|i| {
            let registry = Arc::clone(&registry);
            thread::spawn(move || registry.publish(descriptor(&format!("Svc{i}"), &["Shared"], i)))
        })
        .map(|h| h.join().unwrap())
        .collect();
    let winners = outcomes.iter().filter(|o| o.is_ok()).count();
    assert_eq!(winners, 1);
    for o in &outcomes {
        if let Err(e) = o {
            assert!(matches!(e, RegistryError::Conflict { .. }), "{e}");
        }
    }
    assert_eq!(registry.services().len(), 1);
    let owner = registry.lookup_by_operation("Shared").unwrap().service.service_name.clone();
    assert_eq!(registry.services()[0].service_name, owner);
}

#[derive(Debug, Clone)]
enum Action {
    Publish(usize, Vec<usize>),
    Unpublish(usize),
    Fail(usize),
    Activate(usize),
}

const SERVICES: [&str; 3] = ["S0", "S1", "S2"];
const OPS: [&str; 5] = ["OpA", "OpB", "OpC", "OpD", "OpE"];

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0..3usize, proptest::collection::vec(0..5usize, 1..4)).prop_map(|(s, mut ops)| {
            ops.sort_unstable();
            ops.dedup();
            Action::Publish(s, ops)
        }),
        (0..3usize).prop_map(Action::Unpublish),
        (0..3usize).prop_map(Action::Fail),
        (0..3usize).prop_map(Action::Activate),
    ]
}

/// The reference model: service -> (ops, version, status).
type Model = BTreeMap<&'static str, (Vec<&'static str>, u64, ServiceStatus)>;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn registry_matches_a_sequential_model(actions in proptest::collection::vec(action(), 0..40)) {
        let registry = Registry::new();
        let mut model = Model::new();
        for a in actions {
            match a {
                Action::Publish(s, ops) => {
                    let name = SERVICES[s];
                    let ops: Vec<&str> = ops.into_iter().map(|i| OPS[i]).collect();
                    let taken = model.iter().any(|(other, (owned, _, _))| {
                        *other != name && owned.iter().any(|o| ops.contains(o))
                    });
                    let got = registry.publish(descriptor(name, &ops, 0));
                    if taken {
                        let conflict = matches!(got, Err(RegistryError::Conflict { .. }));
                        prop_assert!(conflict, "{:?}", got);
                    } else {
                        let version = model.get(name).map_or(1, |m| m.1 + 1);
                        prop_assert_eq!(got.unwrap(), version);
                        model.insert(name, (ops, version, ServiceStatus::Active));
                    }
                }
                Action::Unpublish(s) => {
                    let got = registry.unpublish(SERVICES[s]);
                    prop_assert_eq!(got.is_ok(), model.remove(SERVICES[s]).is_some());
                }
                Action::Fail(s) | Action::Activate(s) => {
                    let status = if matches!(a, Action::Fail(_)) { ServiceStatus::Failed } else { ServiceStatus::Active };
                    let got = registry.set_status(SERVICES[s], status);
                    match model.get_mut(SERVICES[s]) {
                        Some(m) => {
                            prop_assert_eq!(got.unwrap(), m.2);
                            m.2 = status;
                        }
                        None => prop_assert!(got.is_err()),
                    }
                }
            }

            for op in OPS {
                let owner = model.iter().find(|(_, m)| m.0.contains(&op));
                match (registry.lookup_by_operation(op), owner) {
                    (Ok(r), Some((name, m))) => {
                        prop_assert_eq!(&r.service.service_name, name);
                        prop_assert_eq!(r.service.version, m.1);
                        prop_assert_eq!(r.service.status, m.2);
                    }
                    (Err(RegistryError::UnknownOperation(_)), None) => {}
                    (got, want) => prop_assert!(false, "{op}: {got:?} vs {want:?}"),
                }
            }
            prop_assert_eq!(registry.services().len(), model.len());
            let listed: Vec<String> = registry.list_operations().into_iter().map(|e| e.name).collect();
            let mut expected: Vec<String> = model.values().flat_map(|m| m.0.iter().map(|s| s.to_string())).collect();
            expected.sort();
            prop_assert_eq!(listed, expected);
        }
    }
}

#[test]
fn snapshot_restores_an_identical_registry() {
    let registry = Registry::new();
    registry.publish(descriptor("A", &["One", "Two"], 1)).unwrap();
    registry.publish(descriptor("A", &["One", "Two"], 2)).unwrap();
    registry.publish(descriptor("B", &["Three"], 1)).unwrap();
    registry.set_status("B", ServiceStatus::Failed).unwrap();

    let copy = Registry::new();
    copy.restore(&registry.snapshot()).unwrap();
    assert_eq!(copy.services(), registry.services());
    assert_eq!(copy.list_operations(), registry.list_operations());
}
