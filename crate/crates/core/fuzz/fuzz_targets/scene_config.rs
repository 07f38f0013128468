#![no_main]

use fracsim_core::scene::load_scene;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = load_scene(text) {
        // Anything that loads is valid and places the distal fragment.
        assert!(scene.validate().is_ok());
        assert_eq!(scene.distal_boxes(&scene.home).len(), scene.distal.len());
    }
});
