#![no_main]
use foodloc::geo::GeoPoint;
use foodloc::hierarchy::PlanDocument;
use foodloc::ingest::Household;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let households: Vec<Household> = (0..4)
        .map(|i| Household::new(format!("h{i}"), GeoPoint::new(i as f64, 0.0).unwrap()))
        .collect();
    if let Ok(doc) = serde_json::from_slice::<PlanDocument>(data) {
        if let Ok(plan) = doc.to_plan(&households) {
            assert_eq!(plan.household_to_pantry.len(), households.len());
        }
    }
});
