use mapnav::annotation::{annotate, AnnotationConfig, Palette};
use mapnav::semantic_map::SemanticMap;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/../../fixtures/asm/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn snapshot_renders_to_golden_png() {
    let map = SemanticMap::from_snapshot(&fixture("chair_room.snap")).unwrap();
    let palette = Palette::for_categories(map.categories().len());
    let asm = annotate(&map, &AnnotationConfig::default(), &palette);
    assert_eq!(asm.placements.iter().filter(|p| p.visible).count(), 1);
    assert_eq!(asm.placements[0].text, "chair");
    assert!(
        asm.image.encode_png() == fixture("chair_room.golden.png"),
        "PNG bytes differ from golden"
    );
    let golden: serde_json::Value = serde_json::from_slice(&fixture("chair_room.golden.json")).unwrap();
    assert_eq!(serde_json::to_value(&asm.placements).unwrap(), golden);
}

#[test]
fn rendering_is_repeatable() {
    let map = SemanticMap::from_snapshot(&fixture("chair_room.snap")).unwrap();
    let palette = Palette::for_categories(map.categories().len());
    let a = annotate(&map, &AnnotationConfig::default(), &palette);
    let b = annotate(&map, &AnnotationConfig::default(), &palette);
    assert_eq!(a, b);
    assert_eq!(map.to_snapshot(), fixture("chair_room.snap"));
}

#[test]
fn damaged_snapshots_are_rejected() {
    let bytes = fixture("chair_room.snap");
    assert!(SemanticMap::from_snapshot(&bytes[..bytes.len() / 2]).is_err());
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x10;
    assert!(SemanticMap::from_snapshot(&flipped).is_err());
    assert!(SemanticMap::from_snapshot(b"not a map").is_err());
}
