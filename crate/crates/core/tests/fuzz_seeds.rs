//! The checked-in fuzz seeds hold the same properties the fuzz targets
//! assert, and every seed parses.

use std::path::{Path, PathBuf};

use fracsim_core::protocol::{decode_client, encode_client};
use fracsim_core::scene::load_scene;
use fracsim_core::script::{expand_script, read_script, write_script};
use fracsim_core::trajectory::read_trajectory;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn scene_seeds_load() {
    for (p, bytes) in seeds("scene_config") {
        let scene = load_scene(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(scene.distal_boxes(&scene.home).len(), scene.distal.len());
    }
}

#[test]
fn script_seeds_expand_and_round_trip() {
    for (p, bytes) in seeds("script_csv") {
        let rows = read_script(bytes.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let ticks = expand_script(&rows, 0.001).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(ticks.inputs.iter().all(|i| i.pose.is_finite()));
        let mut buf = Vec::new();
        write_script(&mut buf, &rows).unwrap();
        assert_eq!(read_script(buf.as_slice()).unwrap(), rows, "{}", p.display());
    }
}

#[test]
fn trajectory_seeds_parse() {
    for (p, bytes) in seeds("trajectory_csv") {
        let records = read_trajectory(bytes.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!records.is_empty());
    }
}

#[test]
fn client_message_seeds_round_trip() {
    for (p, bytes) in seeds("client_message") {
        let msg = decode_client(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(decode_client(&encode_client(&msg)).unwrap(), msg);
    }
}
