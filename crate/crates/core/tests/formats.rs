use std::fs;

use memprop::data::{
    load_events, load_idx, parse_idx, read_evt0, write_evt0, write_idx, DataError, EventSample,
    EventShape, IdxTensor, ImageDataset,
};
use proptest::prelude::*;

fn sample_images() -> (IdxTensor, IdxTensor) {
    let data: Vec<u8> = (0..3 * 4 * 5).map(|k| (k * 37 % 256) as u8).collect();
    (
        IdxTensor::new(vec![3, 4, 5], data).unwrap(),
        IdxTensor::new(vec![3], vec![7, 0, 9]).unwrap(),
    )
}

#[test]
fn idx_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labels) = sample_images();
    let ip = dir.path().join("train-images-idx3-ubyte");
    let lp = dir.path().join("train-labels-idx1-ubyte");
    write_idx(&ip, &imgs).unwrap();
    write_idx(&lp, &labels).unwrap();
    assert_eq!(load_idx(&ip).unwrap(), imgs);
    assert_eq!(load_idx(&lp).unwrap(), labels);
    assert_eq!(fs::read(&ip).unwrap(), imgs.to_bytes());

    let header = &fs::read(&ip).unwrap()[..4];
    assert_eq!(header, &[0x00, 0x00, 0x08, 0x03]);

    let ds = ImageDataset::load(dir.path(), "train").unwrap();
    assert_eq!((ds.len(), ds.rows, ds.cols), (3, 4, 5));
    assert_eq!(ds.labels, vec![7, 0, 9]);
    assert_eq!(ds.images[0][1], 37.0 / 255.0);
}

#[test]
fn corrupted_idx_headers_give_typed_errors() {
    let (imgs, _) = sample_images();
    let good = imgs.to_bytes();

    let mut bad = good.clone();
    bad[0] = 0x12;
    assert!(matches!(parse_idx(&bad), Err(DataError::BadMagic(_))));

    let mut float = good.clone();
    float[2] = 0x0d;
    assert!(matches!(parse_idx(&float), Err(DataError::UnsupportedDtype(0x0d))));

    let cut = &good[..good.len() - 1];
    assert!(matches!(
        parse_idx(cut),
        Err(DataError::TruncatedFile { expected, found }) if expected == good.len() && found == good.len() - 1
    ));
    assert!(matches!(parse_idx(&good[..9]), Err(DataError::TruncatedFile { .. })));
}

#[test]
fn missing_idx_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        ImageDataset::load(dir.path(), "train"),
        Err(DataError::Io { .. })
    ));
}

fn event_sample(frames: usize, fill: u8) -> EventSample {
    let mut s = EventSample::zeros(EventShape::dvs(frames));
    for (k, c) in s.counts.iter_mut().enumerate() {
        if k % 7 == 0 {
            *c = fill.wrapping_add(k as u8);
        }
    }
    s
}

#[test]
fn evt0_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = event_sample(5, 3);
    let p = dir.path().join("a.evt");
    write_evt0(&p, &s).unwrap();
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"EVT0");
    assert_eq!(read_evt0(&bytes).unwrap(), s);
    assert_eq!(read_evt0(&bytes).unwrap().to_bytes(), bytes);
}

#[test]
fn corrupted_evt0_headers_give_typed_errors() {
    let bytes = event_sample(2, 1).to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_evt0(&bad), Err(DataError::BadMagic(_))));
    assert!(matches!(read_evt0(&bytes[..12]), Err(DataError::TruncatedFile { .. })));
    assert!(matches!(
        read_evt0(&bytes[..bytes.len() - 10]),
        Err(DataError::TruncatedFile { .. })
    ));
}

fn write_manifest(dir: &std::path::Path, rows: &[(&str, usize)]) {
    let text: String = rows.iter().map(|(n, l)| format!("{n},{l}\n")).collect();
    fs::write(dir.join("labels.csv"), text).unwrap();
}

#[test]
fn event_directory_with_eleven_classes_loads() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = (0..11).map(|k| format!("g{k}.evt")).collect();
    for (k, n) in names.iter().enumerate() {
        // An all-zero sample is valid input.
        let s = if k == 0 {
            EventSample::zeros(EventShape::dvs(100))
        } else {
            event_sample(100, k as u8)
        };
        write_evt0(&dir.path().join(n), &s).unwrap();
    }
    let rows: Vec<(&str, usize)> = names.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    write_manifest(dir.path(), &rows);
    let ds = load_events(dir.path(), 100).unwrap();
    assert_eq!(ds.len(), 11);
    assert_eq!(ds.labels, (0..11).collect::<Vec<_>>());
    assert!(ds.samples[0].counts.iter().all(|&c| c == 0));
    assert_eq!(ds.shape.features(), 2048);
}

#[test]
fn twelfth_label_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_evt0(&dir.path().join("a.evt"), &event_sample(4, 0)).unwrap();
    write_manifest(dir.path(), &[("a.evt", 11)]);
    assert!(matches!(
        load_events(dir.path(), 4),
        Err(DataError::InvalidLabel { label: 11, classes: 11 })
    ));
}

#[test]
fn wrong_event_geometry_is_a_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let tall = EventSample::zeros(EventShape {
        height: 64,
        ..EventShape::dvs(4)
    });
    write_evt0(&dir.path().join("a.evt"), &tall).unwrap();
    write_manifest(dir.path(), &[("a.evt", 0)]);
    assert!(matches!(load_events(dir.path(), 4), Err(DataError::ShapeMismatch(_))));
}

#[test]
fn unlisted_event_file_is_missing_a_label() {
    let dir = tempfile::tempdir().unwrap();
    write_evt0(&dir.path().join("a.evt"), &event_sample(4, 0)).unwrap();
    write_evt0(&dir.path().join("b.evt"), &event_sample(4, 0)).unwrap();
    write_manifest(dir.path(), &[("a.evt", 0)]);
    assert!(matches!(load_events(dir.path(), 4), Err(DataError::MissingLabel(n)) if n == "b.evt"));
}

proptest! {
    #[test]
    fn idx_bytes_round_trip(dims in prop::collection::vec(1usize..6, 1..4), seed in any::<u8>()) {
        let n: usize = dims.iter().product();
        let data: Vec<u8> = (0..n).map(|k| seed.wrapping_mul(31).wrapping_add(k as u8)).collect();
        let t = IdxTensor::new(dims, data).unwrap();
        prop_assert_eq!(parse_idx(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn evt0_bytes_round_trip(frames in 1usize..4, counts in prop::collection::vec(any::<u8>(), 64)) {
        let mut s = EventSample::zeros(EventShape::dvs(frames));
        for (k, &c) in counts.iter().enumerate() {
            let at = k * 97 % s.counts.len();
            s.counts[at] = c;
        }
        prop_assert_eq!(read_evt0(&s.to_bytes()).unwrap(), s);
    }
}
