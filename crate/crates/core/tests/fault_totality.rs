use proptest::prelude::*;
use rover_esb::esb::{is_well_ordered, Esb, EsbConfig, Step};
use rover_esb::message::{soap, Envelope, Status};
use rover_esb::{ParamValue, RequestEnvelope};

fn bus() -> (tempfile::TempDir, Esb) {
    let dir = tempfile::tempdir().unwrap();
    let esb = Esb::new(EsbConfig::ephemeral(dir.path().join("images"))).unwrap();
    (dir, esb)
}

fn template() -> Vec<u8> {
    soap::encode(&Envelope::Request(RequestEnvelope::new(
        "fuzz",
        "SpectrometryService",
        "AnalyzeParticlesSpeed",
        vec![ParamValue::float("mass", 5.0), ParamValue::text("note", "a<b&c")],
    )))
    .into_bytes()
}

fn payload() -> impl Strategy<Value = Vec<u8>> {
    let t = template();
    let len = t.len();
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..400),
        proptest::collection::vec((0..len, any::<u8>()), 1..6).prop_map({
            let t = t.clone();
            move |edits| {
                let mut b = t.clone();
                for (i, v) in edits {
                    b[i] = v;
                }
                b
            }
        }),
        (0..len).prop_map(move |n| t[..n].to_vec()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_input_gets_a_well_formed_fault(body in payload()) {
        let (_dir, esb) = bus();
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let reply = rt.block_on(esb.handle(&body));
        prop_assert!(soap::validate(&reply).is_empty(), "{:?}\n{}", soap::validate(&reply), reply);
        let resp = soap::decode(&reply).unwrap().into_response().unwrap();
        prop_assert_eq!(resp.status, Status::Fault);
        prop_assert!(resp.fault.is_some());

        // The audit for the request is well ordered and ends FAULTED.
        let records = esb.audit().since(0);
        let last = records.last().unwrap();
        prop_assert_eq!(last.step, Step::Faulted);
        let steps: Vec<Step> = esb.audit().for_message(&last.message_id).iter().map(|r| r.step).collect();
        prop_assert!(is_well_ordered(&steps), "{:?}", steps);
    }
}
