//! Index a few generated images and find nearest neighbours of one of them.

use std::io::Cursor;

use scirag::embed::ThumbnailEmbedder;
use scirag::images::{ingest_images, search_images, ImageKind, ImageQuery, ImageRecord, ImageSearchParams};
use scirag::provider::RetryPolicy;
use scirag::retrieval::SimilarityMeasure;
use scirag::store::SqliteStore;

fn gradient(dir: &std::path::Path, name: &str, tilt: u32) -> anyhow::Result<std::path::PathBuf> {
    let img = image::RgbImage::from_fn(48, 48, |x, y| {
        let v = ((x * tilt + y * (8 - tilt)) % 256) as u8;
        image::Rgb([v, v / 2, 255 - v])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    let path = dir.join(name);
    std::fs::create_dir_all(path.parent().unwrap())?;
    std::fs::write(&path, out.into_inner())?;
    Ok(path)
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut records = Vec::new();
    for (group, tilts) in [("run-a", [1, 2]), ("run-b", [3, 6])] {
        for t in tilts {
            let p = gradient(dir.path(), &format!("{group}/tilt{t}.png"), t)?;
            records.push(ImageRecord::new(p, ImageKind::Raw));
        }
    }
    let store = SqliteStore::in_memory()?;
    let provider = ThumbnailEmbedder::new();
    let counts = ingest_images(&records, &provider, &store, &RetryPolicy::default());
    println!("indexed {} images", counts.ok);

    for exclude_same_group in [false, true] {
        let params = ImageSearchParams { measure: SimilarityMeasure::Cosine, k: 3, exclude_same_group };
        let hits = search_images(ImageQuery::Stored(records[0].image_id), &params, None, &provider, &store)?;
        println!("exclude same group: {exclude_same_group}");
        for h in hits {
            println!("  {:.4} {}", h.hit.score, h.image.path.strip_prefix(dir.path())?.display());
        }
    }
    Ok(())
}
