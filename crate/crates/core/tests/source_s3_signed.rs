//! Credentials from the environment produce SigV4-signed requests. Kept in
//! its own test binary because it sets process environment variables.

use bioimagepub::source::{Source, SourceLocator, ACCESS_KEY_ENV, SECRET_KEY_ENV};
use bioimagepub_mock_hub::fixtures::S3Fixture;

#[test]
fn signed_listing_and_fetch() {
    std::env::set_var(ACCESS_KEY_ENV, "AKIDEXAMPLE");
    std::env::set_var(SECRET_KEY_ENV, "wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY");
    let s3 = S3Fixture::start_with("private", [("data/a b.tif".to_string(), vec![5u8; 3])], 10, true).unwrap();
    let mut locator = SourceLocator::s3("s3://private/data", Some(s3.endpoint()));
    locator.anonymous = false;
    let source = Source::open(&locator).unwrap();
    let inv = source.list().unwrap();
    assert_eq!(inv.entries()[0].relative_path, "a b.tif");
    assert_eq!(source.fetch(&inv.entries()[0]).unwrap(), vec![5u8; 3]);
}
