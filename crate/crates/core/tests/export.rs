use std::path::PathBuf;

use epmakit_core::annotate::{BarPosition, ScaleBarStyle};
use epmakit_core::codec::{decode_bytes, encode_raster, load_raster, ImageFormat};
use epmakit_core::compose::{render_uncached, RenderContext};
use epmakit_core::export::{
    run_batch, substitute_name_template, validate_filename, BatchOptions, ExportError, ExportJob, FilenameError,
    NameTemplate, OsFilenameRules, TemplateError, TemplateVars,
};
use epmakit_core::project::scan_project;
use epmakit_core::{Raster, RenderSettings};
use epmakit_testkit::{base_value, gray_image, standard_project};
use proptest::prelude::*;

const FORMATS: [ImageFormat; 5] = [ImageFormat::Png, ImageFormat::Jpg, ImageFormat::Webp, ImageFormat::Tiff, ImageFormat::Bmp];

fn vars<'a>(name: &'a str) -> TemplateVars<'a> {
    TemplateVars { name, index: 1, date: "2020-01-09" }
}

#[test]
fn published_template_examples() {
    assert_eq!(substitute_name_template("{name}.png", &vars("Area1")).unwrap(), "Area1.png");
    assert_eq!(substitute_name_template("{name}-1-9-2020.png", &vars("img04")).unwrap(), "img04-1-9-2020.png");
    assert_eq!(substitute_name_template("plain.png", &vars("x")).unwrap(), "plain.png");
    assert!(matches!(substitute_name_template("{nam}.png", &vars("x")), Err(TemplateError::UnknownVariable(_))));
    assert!(matches!(substitute_name_template("{name.png", &vars("x")), Err(TemplateError::UnbalancedBrace(_))));
}

#[test]
fn published_filename_rules() {
    let win = OsFilenameRules::windows();
    let posix = OsFilenameRules::posix();
    assert_eq!(validate_filename("Fe:map.png", &win), Err(FilenameError::ForbiddenChar(':')));
    assert_eq!(validate_filename("Fe:map.png", &posix), Ok(()));
    for c in ['\\', '/', '|', ':', '*', '?', '"', '<', '>'] {
        assert_eq!(validate_filename(&format!("a{c}b.png"), &win), Err(FilenameError::ForbiddenChar(c)));
    }
    assert_eq!(validate_filename("a/b.png", &posix), Err(FilenameError::ForbiddenChar('/')));
    assert!(matches!(validate_filename(&"x".repeat(300), &posix), Err(FilenameError::TooLong { .. })));
    assert!(matches!(validate_filename("CON.png", &win), Err(FilenameError::ReservedName(_))));
    assert!(matches!(validate_filename("lpt9", &win), Err(FilenameError::ReservedName(_))));
    assert_eq!(validate_filename("CON.png", &posix), Ok(()));
}

#[test]
fn native_resolution_png_header() {
    let img = Raster::filled_rgb(4096, 4096, [7, 8, 9]);
    let png = encode_raster(&img, ImageFormat::Png, 90).unwrap();
    assert_eq!(&png[12..16], b"IHDR");
    assert_eq!(u32::from_be_bytes(png[16..20].try_into().unwrap()), 4096);
    assert_eq!(u32::from_be_bytes(png[20..24].try_into().unwrap()), 4096);
}

#[test]
fn every_format_keeps_dimensions() {
    let img = gray_image(127, 61, base_value).to_rgb8();
    for fmt in FORMATS {
        let bytes = encode_raster(&img, fmt, 90).unwrap();
        assert_eq!(ImageFormat::sniff(&bytes), Some(fmt));
        let back = decode_bytes(&bytes, None).unwrap();
        assert_eq!(back.dims(), (127, 61), "{fmt:?}");
        if !fmt.is_lossy() {
            assert_eq!(back.to_rgb8(), img, "{fmt:?}");
        }
    }
}

#[test]
fn jpeg_quality_90_error_is_small() {
    let img = gray_image(256, 192, |x, y| ((x + 2 * y) / 3 % 256) as u8).to_rgb8();
    let bytes = encode_raster(&img, ImageFormat::Jpg, 90).unwrap();
    let back = decode_bytes(&bytes, None).unwrap().to_rgb8();
    let (a, b) = (img.rgb().unwrap(), back.rgb().unwrap());
    let mae = a.iter().zip(b).map(|(&p, &q)| f64::from(p.abs_diff(q))).sum::<f64>() / a.len() as f64;
    assert!(mae < 3.0, "mean absolute error {mae}");
}

fn opts() -> BatchOptions {
    BatchOptions { date: "2024-05-06".into(), ..BatchOptions::default() }
}

fn job(entry: &str) -> ExportJob {
    ExportJob::new(entry, RenderSettings::default(), ImageFormat::Png, NameTemplate::default())
}

#[test]
fn batch_names_collisions_and_isolation() {
    let tmp = tempfile::tempdir().unwrap();
    standard_project(tmp.path());
    let index = scan_project(tmp.path()).unwrap();
    let dest = tempfile::tempdir().unwrap();

    let queue = vec![job("A01"), job("B02"), job("C03")];
    let report = run_batch(&queue, dest.path(), &index, &opts()).unwrap();
    let names: Vec<String> = report
        .outcomes
        .iter()
        .map(|o| o.result.as_ref().unwrap().file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["A01.png", "B02.png", "C03.png"]);

    let report = run_batch(&[job("A01"), job("A01")], dest.path(), &index, &opts()).unwrap();
    assert_eq!(report.outcomes[1].result.as_ref().unwrap().file_name().unwrap(), "A01-2.png");

    std::fs::remove_file(tmp.path().join("B02/image.png")).unwrap();
    let report = run_batch(&queue, dest.path(), &index, &opts()).unwrap();
    assert_eq!(report.outcomes.len(), 3);
    assert_eq!((report.succeeded(), report.failed()), (2, 1));
    assert!(report.outcomes[1].result.is_err());
    assert_eq!(report.outcomes.iter().map(|o| o.index).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn batch_output_matches_render_at_native_size() {
    let tmp = tempfile::tempdir().unwrap();
    standard_project(tmp.path());
    let index = scan_project(tmp.path()).unwrap();
    let dest = tempfile::tempdir().unwrap();
    let below = RenderSettings {
        scale_bar: Some(ScaleBarStyle { position: BarPosition::BarBelowRight, ..ScaleBarStyle::default() }),
        ..RenderSettings::default()
    };
    let mut queue = Vec::new();
    for e in &index.entries {
        for fmt in FORMATS {
            for s in [RenderSettings::default(), below.clone()] {
                let t = NameTemplate::parse("{index}_{name}").unwrap();
                queue.push(ExportJob::new(e.id(), s, fmt, t));
            }
        }
    }
    let report = run_batch(&queue, dest.path(), &index, &opts()).unwrap();
    assert_eq!(report.failed(), 0);
    for (job, o) in queue.iter().zip(&report.outcomes) {
        let path: &PathBuf = o.result.as_ref().unwrap();
        let written = load_raster(path, None).unwrap();
        let rendered = render_uncached(&RenderContext::default(), index.entry(&job.entry).unwrap(), &job.settings).unwrap();
        assert_eq!(written.dims(), rendered.dims(), "{}", path.display());
        let (w, h) = index.entry(&job.entry).unwrap().dims();
        assert_eq!(written.width(), w);
        if job.settings == below {
            assert!(written.height() > h);
        } else {
            assert_eq!(written.height(), h);
        }
        if !job.format.is_lossy() {
            assert_eq!(written.to_rgb8(), rendered);
        }
    }
}

#[test]
fn unwritable_destination_is_global_error() {
    let tmp = tempfile::tempdir().unwrap();
    standard_project(tmp.path());
    let index = scan_project(tmp.path()).unwrap();
    let file = tmp.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    assert!(matches!(run_batch(&[job("A01")], &file, &index, &opts()), Err(ExportError::DestNotWritable { .. })));
}

proptest! {
    #[test]
    fn substitution_does_not_rescan(name in "[{}a-z]{0,12}", index in 1usize..1000) {
        let t = NameTemplate::parse("{name}_{index}").unwrap();
        let out = t.substitute(&TemplateVars { name: &name, index, date: "2024-01-01" });
        prop_assert_eq!(out, format!("{name}_{index}"));
    }

    #[test]
    fn produced_names_pass_host_rules(ids in prop::collection::vec("[A-Za-z0-9_-]{1,20}", 1..6)) {
        let rules = OsFilenameRules::host();
        for (i, id) in ids.iter().enumerate() {
            let name = NameTemplate::default().substitute(&TemplateVars { name: id, index: i + 1, date: "2024-01-01" });
            prop_assert_eq!(validate_filename(&name, &rules), Ok(()));
        }
    }
}
