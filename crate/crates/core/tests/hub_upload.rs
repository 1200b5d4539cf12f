//! Upload client against the in-process mock hub.

use std::collections::BTreeMap;
use std::time::Duration;

use bioimagepub::hub::{
    plan_commit, CommitPlan, HubClient, HubError, HubOptions, RepoOutcome, RepoTarget,
};
use bioimagepub::retry::RetryPolicy;
use bioimagepub_mock_hub::{FaultPlan, MockHub, MockHubConfig, RequestKind};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn fast_client() -> HubClient {
    HubClient::new(HubOptions {
        retry: RetryPolicy::hub_default().with_base_delay(Duration::from_millis(1)),
        ..Default::default()
    })
    .unwrap()
}

fn target(hub: &MockHub) -> RepoTarget {
    RepoTarget::new(hub.url(), "lab/cells")
}

fn files(entries: &[(&str, &[u8])]) -> BTreeMap<String, Vec<u8>> {
    entries.iter().map(|(p, b)| (p.to_string(), b.to_vec())).collect()
}

fn plan(t: RepoTarget, content: &BTreeMap<String, Vec<u8>>, threshold: u64) -> CommitPlan {
    plan_commit(t, content.iter().map(|(p, b)| (p.clone(), b.as_slice())), threshold, "Publish dataset").unwrap()
}

fn assert_tree_matches(hub: &MockHub, content: &BTreeMap<String, Vec<u8>>) {
    let state = hub.state();
    let tree = state.tree("lab/cells", "main");
    assert_eq!(tree.len(), content.len());
    for (path, bytes) in content {
        let stored = state.file_content("lab/cells", "main", path).unwrap();
        assert_eq!(<[u8; 32]>::from(Sha256::digest(stored)), <[u8; 32]>::from(Sha256::digest(bytes)), "{path}");
        assert_eq!(stored, bytes.as_slice());
    }
}

#[test]
fn ensure_repo_is_idempotent() {
    let hub = MockHub::start();
    let client = fast_client();
    assert_eq!(client.ensure_repo(&target(&hub)).unwrap().outcome, RepoOutcome::Created);
    assert_eq!(client.ensure_repo(&target(&hub)).unwrap().outcome, RepoOutcome::AlreadyExists);
}

#[test]
fn bad_token_fails_auth() {
    let hub = MockHub::serve(MockHubConfig { auth_token: Some("right".into()), ..Default::default() }).unwrap();
    let client = fast_client();
    let bad = target(&hub).with_token(Some("wrong".into()));
    assert!(matches!(client.ensure_repo(&bad), Err(HubError::AuthFailed(401))));
    // 4xx is never retried.
    assert_eq!(hub.count(RequestKind::CreateRepo), 1);
    let good = target(&hub).with_token(Some("right".into()));
    assert_eq!(client.ensure_repo(&good).unwrap().outcome, RepoOutcome::Created);
}

#[test]
fn three_small_files_then_rerun() {
    let hub = MockHub::start();
    let client = fast_client();
    let t = target(&hub);
    client.ensure_repo(&t).unwrap();
    let content = files(&[("README.md", b"# cells\n"), ("train/metadata.csv", b"file_name\na.png\n"), ("train/a.png", b"hi")]);
    let p = plan(t.clone(), &content, 1024);
    let first = client.upload(&p, &content).unwrap();
    assert_eq!(first.uploaded.len(), 3);
    assert!(first.skipped.is_empty());
    assert!(first.is_success());
    assert_tree_matches(&hub, &content);
    let after_first = hub.state();

    let second = client.upload(&p, &content).unwrap();
    assert!(second.uploaded.is_empty());
    assert_eq!(second.skipped.len(), 3);
    assert!(second.is_success());
    assert_eq!(second.commit, None);
    assert_eq!(hub.state(), after_first);
}

#[test]
fn lfs_files_and_transient_put_failure() {
    let hub = MockHub::serve(MockHubConfig {
        auth_token: Some("tok".into()),
        fault_plan: FaultPlan::none().fail_nth(RequestKind::LfsPut, 1, 503),
        ..Default::default()
    })
    .unwrap();
    let client = fast_client();
    let t = target(&hub).with_token(Some("tok".into()));
    client.ensure_repo(&t).unwrap();
    let big_a = vec![1u8; 300];
    let big_b = vec![2u8; 400];
    let content = files(&[("README.md", b"card"), ("train/a.tif", &big_a), ("train/b.tif", &big_b), ("train/copy.tif", &big_a)]);
    let report = client.upload(&plan(t, &content, 100), &content).unwrap();
    assert!(report.is_success());
    assert_eq!(report.lfs_objects_sent, 2);
    assert_eq!(report.lfs_bytes_sent, 700);
    assert_eq!(hub.state().commits.len(), 1);
    assert_eq!(hub.count(RequestKind::LfsPut), 3);
    assert_tree_matches(&hub, &content);
}

#[test]
fn failed_lfs_transfer_blocks_commit_and_resume_completes() {
    let hub = MockHub::start();
    let client = fast_client();
    let t = target(&hub);
    client.ensure_repo(&t).unwrap();
    let blobs: Vec<Vec<u8>> = (0..6u8).map(|i| vec![i; 200 + i as usize]).collect();
    let mut content = BTreeMap::new();
    for (i, b) in blobs.iter().enumerate() {
        content.insert(format!("train/{i}.tif"), b.clone());
    }
    content.insert("README.md".to_string(), b"card".to_vec());
    let p = plan(t, &content, 100);

    hub.set_fault_plan(FaultPlan::none().fail_from(RequestKind::LfsPut, 4, 500));
    match client.upload(&p, &content) {
        Err(HubError::PartialUpload { failed, report }) => {
            assert_eq!(failed.len(), 3);
            assert_eq!(report.lfs_objects_sent, 3);
        }
        other => panic!("expected partial upload, got {other:?}"),
    }
    assert!(hub.state().commits.is_empty());
    assert_eq!(hub.count(RequestKind::Commit), 0);

    hub.set_fault_plan(FaultPlan::none());
    hub.clear_requests();
    let report = client.upload(&p, &content).unwrap();
    assert_eq!(report.lfs_already_stored, 3);
    assert_eq!(report.lfs_objects_sent, 3);
    assert_eq!(hub.count(RequestKind::LfsPut), 3);
    assert_tree_matches(&hub, &content);
}

#[test]
fn content_changed_after_planning() {
    let hub = MockHub::start();
    let client = fast_client();
    let t = target(&hub);
    client.ensure_repo(&t).unwrap();
    let content = files(&[("a.txt", b"before")]);
    let p = plan(t, &content, 1024);
    let changed = files(&[("a.txt", b"after!")]);
    assert!(matches!(client.upload(&p, &changed), Err(HubError::ContentChanged { .. })));
    assert!(hub.state().commits.is_empty());
}

#[test]
fn upload_after_reset_reports_missing_repo() {
    let hub = MockHub::start();
    let client = fast_client();
    let t = target(&hub);
    client.ensure_repo(&t).unwrap();
    hub.reset();
    let content = files(&[("a.txt", b"x")]);
    assert!(matches!(client.upload(&plan(t, &content, 1024), &content), Err(HubError::Hub { status: 404, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn upload_twice_equals_once(
        entries in prop::collection::btree_map("[a-z]{1,4}/[a-z]{1,6}\\.(png|tif)", prop::collection::vec(any::<u8>(), 0..300), 1..6),
        threshold in 0u64..300,
    ) {
        let hub = MockHub::start();
        let client = fast_client();
        let t = target(&hub);
        client.ensure_repo(&t).unwrap();
        let p = plan(t, &entries, threshold);
        client.upload(&p, &entries).unwrap();
        let once = hub.state();
        client.upload(&p, &entries).unwrap();
        prop_assert_eq!(hub.state(), once);
        assert_tree_matches(&hub, &entries);
    }
}
