//! Binary PGM (P5) reading and writing for 28x28 maxval-255 portraits,
//! one file per portrait. Round-trips are bitwise exact.

use std::fs;
use std::path::Path;

use faultface::error::{Error, Result};
use faultface::portrait::{Portrait, PIXELS, SIDE};

pub fn write_pgm(portrait: &Portrait, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(PIXELS + 16);
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", SIDE, SIDE).as_bytes());
    bytes.extend_from_slice(portrait.pixels());
    fs::write(path, bytes)?;
    Ok(())
}

/// Parse a P5 file, enforcing 28x28 and maxval 255. Returns raw pixels;
/// kind/label/source metadata live in the index files next to the
/// images.
pub fn read_pgm(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Format(format!("{}: {}", path.display(), msg));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(fail("not a binary PGM (missing P5 magic)"));
    }

    // header: three whitespace-separated tokens (width, height, maxval),
    // `#` comments allowed, then a single whitespace byte before payload
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fail("truncated header"));
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| fail("non-ascii header token"))?;
        let value: usize = token
            .parse()
            .map_err(|_| fail(&format!("bad header token {:?}", token)))?;
        tokens.push(value);
    }
    if pos >= bytes.len() {
        return Err(fail("missing payload"));
    }
    pos += 1; // single whitespace after maxval

    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 255 {
        return Err(fail(&format!("maxval {} unsupported, want 255", maxval)));
    }
    if width != SIDE || height != SIDE {
        return Err(fail(&format!("size {}x{} unsupported, want {}x{}", width, height, SIDE, SIDE)));
    }
    let payload = &bytes[pos..];
    if payload.len() != PIXELS {
        return Err(fail(&format!(
            "payload is {} bytes, want {}",
            payload.len(),
            PIXELS
        )));
    }
    Ok(payload.to_vec())
}

/// `<kind>_<label>_<source_id>_<index>.pgm` with the source id reduced
/// to filename-safe characters.
pub fn portrait_filename(p: &Portrait, index: usize) -> String {
    let safe: String = p
        .source_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!("{}_{}_{}_{:05}.pgm", p.kind, p.label, safe, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faultface::dataset::BehaviorClass;
    use faultface::portrait::PortraitKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn portrait(seed: u64) -> Portrait {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Portrait::new(
            (0..PIXELS).map(|_| rng.gen()).collect(),
            PortraitKind::Hankel,
            BehaviorClass::LoadOpposite,
            "rec 7/a",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..10 {
            let p = portrait(seed);
            let path = dir.path().join(format!("{}.pgm", seed));
            write_pgm(&p, &path).unwrap();
            assert_eq!(read_pgm(&path).unwrap(), p.pixels());
        }
    }

    #[test]
    fn zero_portrait_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = Portrait::new(
            vec![0; PIXELS],
            PortraitKind::Cmr,
            BehaviorClass::Nominal,
            "z",
        )
        .unwrap();
        let path = dir.path().join("z.pgm");
        write_pgm(&p, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), vec![0u8; PIXELS]);
    }

    #[test]
    fn rejects_wide_maxval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.pgm");
        let mut bytes = format!("P5\n{} {}\n65535\n", SIDE, SIDE).into_bytes();
        bytes.extend(std::iter::repeat(0u8).take(PIXELS * 2));
        std::fs::write(&path, bytes).unwrap();
        let err = read_pgm(&path).unwrap_err();
        assert!(err.to_string().contains("65535"), "{}", err);
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.pgm");
        let mut bytes = format!("P5\n{} {}\n255\n", SIDE, SIDE).into_bytes();
        bytes.extend(std::iter::repeat(7u8).take(PIXELS - 3));
        std::fs::write(&path, bytes).unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn rejects_bad_magic_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P6\n28 28\n255\n").unwrap();
        assert!(read_pgm(&path).is_err());
        let path2 = dir.path().join("small.pgm");
        let mut bytes = b"P5\n14 14\n255\n".to_vec();
        bytes.extend(std::iter::repeat(0u8).take(196));
        std::fs::write(&path2, bytes).unwrap();
        assert!(read_pgm(&path2).is_err());
    }

    #[test]
    fn comments_in_header_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = format!("P5\n# made by hand\n{} {}\n255\n", SIDE, SIDE).into_bytes();
        bytes.extend(std::iter::repeat(9u8).take(PIXELS));
        std::fs::write(&path, bytes).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), vec![9u8; PIXELS]);
    }

    #[test]
    fn filenames_are_sanitized() {
        let p = portrait(1);
        let name = portrait_filename(&p, 3);
        assert_eq!(name, "hankel_LoadOpposite_rec-7-a_00003.pgm");
    }
}
