//! OMERO map-annotation harvesting against the JSON API fixture.

use std::time::Duration;

use bioimagepub::metadata::{harvest_omero, AnnotationSource, MetadataError, OmeroFailure, OmeroOptions};
use bioimagepub::retry::RetryPolicy;
use bioimagepub_mock_hub::fixtures::{OmeroFixture, OmeroImage};

fn options() -> OmeroOptions {
    OmeroOptions {
        retry: RetryPolicy::source_default().with_base_delay(Duration::from_millis(1)),
        concurrency: 3,
        ..Default::default()
    }
}

fn image(name: &str, pairs: &[(&str, &str)]) -> OmeroImage {
    OmeroImage {
        name: name.into(),
        map_annotations: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

#[test]
fn harvests_in_id_order_and_reports_missing_images() {
    let omero = OmeroFixture::start([
        (11, image("plate1_A1", &[("Gene Symbol", "KIF11"), ("Phenotype", "mitotic arrest")])),
        (12, image("plate1_A2", &[("Gene Symbol", "CENPE")])),
        (13, image("plate1_A3", &[])),
    ])
    .unwrap();
    let h = harvest_omero(&omero.api_base(), &[12, 99, 11, 13], &options()).unwrap();
    assert_eq!(h.succeeded, [12, 11, 13]);
    assert_eq!(h.failures, [OmeroFailure::NoSuchImage(99)]);
    assert_eq!(h.table.source, AnnotationSource::Omero);
    let keys: Vec<&String> = h.table.rows().keys().collect();
    assert_eq!(keys, ["plate1_A2", "plate1_A1", "plate1_A3"]);
    assert_eq!(h.table.get("plate1_A1", "gene_symbol"), Some("KIF11"));
    assert_eq!(h.table.get("plate1_A1", "phenotype"), Some("mitotic arrest"));
    assert_eq!(h.table.get("plate1_A3", "gene_symbol"), None);
}

#[test]
fn dead_endpoint_is_unreachable() {
    let base = {
        let omero = OmeroFixture::start([]).unwrap();
        omero.api_base()
    };
    let err = harvest_omero(&base, &[1, 2], &options()).unwrap_err();
    assert!(matches!(err, MetadataError::SourceUnreachable(_)), "{err}");
}
