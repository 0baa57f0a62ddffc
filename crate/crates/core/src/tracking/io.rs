use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use super::{Landmark2d, LandmarkFrame, TrackingError};
use crate::facemodel::LandmarkLabel;

/// A recorded landmark capture: camera image sizes plus the per-frame
/// detections, serialized to a line-oriented text format whose floating
/// point values round-trip exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSequence {
    face_size: (u32, u32),
    eye_size: (u32, u32),
    frames: Vec<LandmarkFrame>,
}

impl LandmarkSequence {
    /// Validates that frame ids strictly increase and that every visible
    /// landmark (and every HMD dot) lies inside its camera's image.
    pub fn new(
        face_size: (u32, u32),
        eye_size: (u32, u32),
        frames: Vec<LandmarkFrame>,
    ) -> Result<Self, TrackingError> {
        let in_image = |p: &Vector2<f64>, (w, h): (u32, u32)| {
            p.x >= 0.0 && p.x < w as f64 && p.y >= 0.0 && p.y < h as f64
        };
        for pair in frames.windows(2) {
            if pair[1].frame_id() <= pair[0].frame_id() {
                return Err(TrackingError::FrameOrder {
                    prev: pair[0].frame_id(),
                    got: pair[1].frame_id(),
                });
            }
        }
        for frame in &frames {
            let lists: [(&[Landmark2d], (u32, u32)); 3] = [
                (frame.face_landmarks(), face_size),
                (frame.eye_landmarks_left(), eye_size),
                (frame.eye_landmarks_right(), eye_size),
            ];
            for (lms, size) in lists {
                for lm in lms.iter().filter(|l| l.visible) {
                    if !in_image(&lm.position, size) {
                        return Err(TrackingError::OutOfBounds {
                            what: format!("landmark {}", lm.label),
                            x: lm.position.x,
                            y: lm.position.y,
                            width: size.0,
                            height: size.1,
                        });
                    }
                }
            }
            for (i, dot) in frame.hmd_dot_pixels().iter().enumerate() {
                if !in_image(dot, face_size) {
                    return Err(TrackingError::OutOfBounds {
                        what: format!("hmd dot {i}"),
                        x: dot.x,
                        y: dot.y,
                        width: face_size.0,
                        height: face_size.1,
                    });
                }
            }
        }
        Ok(Self { face_size, eye_size, frames })
    }

    pub fn face_size(&self) -> (u32, u32) {
        self.face_size
    }

    pub fn eye_size(&self) -> (u32, u32) {
        self.eye_size
    }

    pub fn frames(&self) -> &[LandmarkFrame] {
        &self.frames
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# landmark sequence").unwrap();
        writeln!(s, "version 1").unwrap();
        writeln!(s, "face_size {} {}", self.face_size.0, self.face_size.1).unwrap();
        writeln!(s, "eye_size {} {}", self.eye_size.0, self.eye_size.1).unwrap();
        writeln!(s, "frames {}", self.frames.len()).unwrap();
        for frame in &self.frames {
            writeln!(s, "frame {}", frame.frame_id()).unwrap();
            writeln!(s, "dots {}", frame.hmd_dot_pixels().len()).unwrap();
            for dot in frame.hmd_dot_pixels() {
                writeln!(s, "{} {}", dot.x, dot.y).unwrap();
            }
            let lists = [
                ("face", frame.face_landmarks()),
                ("eye_left", frame.eye_landmarks_left()),
                ("eye_right", frame.eye_landmarks_right()),
            ];
            for (tag, lms) in lists {
                writeln!(s, "{} {}", tag, lms.len()).unwrap();
                for lm in lms {
                    writeln!(
                        s,
                        "{} {} {} {}",
                        lm.label,
                        lm.position.x,
                        lm.position.y,
                        u8::from(lm.visible)
                    )
                    .unwrap();
                }
            }
            writeln!(s, "end").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TrackingError> {
        let mut cur = Cursor::new(text);
        let (line, header) = cur.next()?;
        if header != "# landmark sequence" {
            return Err(parse_err(line, "expected `# landmark sequence` header"));
        }
        let (line, version) = cur.next()?;
        if version != "version 1" {
            return Err(parse_err(line, format!("unsupported version line `{version}`")));
        }
        let face_size = parse_pair::<u32>(cur.tagged("face_size")?)?;
        let eye_size = parse_pair::<u32>(cur.tagged("eye_size")?)?;
        let (line, count) = cur.tagged("frames")?;
        let count: usize = parse_num((line, count))?;

        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let frame_id: usize = parse_num(cur.tagged("frame")?)?;
            let dot_count: usize = parse_num(cur.tagged("dots")?)?;
            let mut dots = Vec::with_capacity(dot_count);
            for _ in 0..dot_count {
                let (line, body) = cur.next()?;
                let (x, y) = parse_pair::<f64>((line, body))?;
                dots.push(Vector2::new(x, y));
            }
            let mut lists: [Vec<Landmark2d>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for (tag, list) in ["face", "eye_left", "eye_right"].iter().zip(&mut lists) {
                let lm_count: usize = parse_num(cur.tagged(tag)?)?;
                for _ in 0..lm_count {
                    let (line, body) = cur.next()?;
                    list.push(parse_landmark(line, body)?);
                }
            }
            let (line, end) = cur.next()?;
            if end != "end" {
                return Err(parse_err(line, format!("expected `end`, found `{end}`")));
            }
            let [face, eye_left, eye_right] = lists;
            frames.push(LandmarkFrame::new(frame_id, face, eye_left, eye_right, dots)?);
        }
        if let Ok((line, extra)) = cur.next() {
            return Err(parse_err(line, format!("unexpected trailing content `{extra}`")));
        }
        Self::new(face_size, eye_size, frames)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrackingError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, TrackingError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> TrackingError {
    TrackingError::Parse { line, message: message.into() }
}

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), last: 0 }
    }

    fn next(&mut self) -> Result<(usize, &'a str), TrackingError> {
        for (i, raw) in self.lines.by_ref() {
            self.last = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            return Ok((i + 1, trimmed));
        }
        Err(parse_err(self.last + 1, "unexpected end of file"))
    }

    /// Next line must start with `tag` followed by whitespace; returns the
    /// remainder.
    fn tagged(&mut self, tag: &str) -> Result<(usize, &'a str), TrackingError> {
        let (line, body) = self.next()?;
        match body.split_once(char::is_whitespace) {
            Some((head, rest)) if head == tag => Ok((line, rest.trim())),
            _ => Err(parse_err(line, format!("expected `{tag} ...`, found `{body}`"))),
        }
    }
}

fn parse_num<T: std::str::FromStr>((line, s): (usize, &str)) -> Result<T, TrackingError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number `{s}`")))
}

fn parse_pair<T: std::str::FromStr + Copy>(
    (line, s): (usize, &str),
) -> Result<(T, T), TrackingError> {
    let mut items = s.split_whitespace();
    let mut one = || {
        items
            .next()
            .ok_or_else(|| parse_err(line, "expected two values"))
            .and_then(|tok| parse_num((line, tok)))
    };
    let pair = (one()?, one()?);
    if items.next().is_some() {
        return Err(parse_err(line, "expected exactly two values"));
    }
    Ok(pair)
}

fn parse_landmark(line: usize, body: &str) -> Result<Landmark2d, TrackingError> {
    let tokens: Vec<&str> = body.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(parse_err(line, format!("expected `label x y visible`, found `{body}`")));
    }
    let label: LandmarkLabel =
        tokens[0].parse().map_err(|e: String| parse_err(line, e))?;
    let x: f64 = parse_num((line, tokens[1]))?;
    let y: f64 = parse_num((line, tokens[2]))?;
    let visible = match tokens[3] {
        "0" => false,
        "1" => true,
        other => return Err(parse_err(line, format!("bad visibility flag `{other}`"))),
    };
    Ok(Landmark2d::new(label, Vector2::new(x, y), visible))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facemodel::LandmarkGroup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn label(group: LandmarkGroup, index: u8) -> LandmarkLabel {
        LandmarkLabel::new(group, index).unwrap()
    }

    fn random_sequence(seed: u64, frames: usize) -> LandmarkSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let face_size = (320u32, 240u32);
        let eye_size = (160u32, 120u32);
        let mut out = Vec::new();
        for f in 0..frames {
            let mut pick = |group: LandmarkGroup, (w, h): (u32, u32)| -> Vec<Landmark2d> {
                let n = rng.gen_range(0..=group.capacity());
                (0..n)
                    .map(|i| {
                        let visible = rng.gen_bool(0.8);
                        let pos = if visible {
                            Vector2::new(
                                rng.gen_range(0.0..w as f64),
                                rng.gen_range(0.0..h as f64),
                            )
                        } else {
                            Vector2::new(rng.gen_range(-50.0..500.0), rng.gen_range(-50.0..500.0))
                        };
                        Landmark2d::new(label(group, i), pos, visible)
                    })
                    .collect()
            };
            let mut face = pick(LandmarkGroup::Mouth, face_size);
            face.extend(pick(LandmarkGroup::Jaw, face_size));
            let eye_left = pick(LandmarkGroup::EyeLeft, eye_size);
            let eye_right = pick(LandmarkGroup::BrowRight, eye_size);
            let dots: Vec<Vector2<f64>> = (0..rng.gen_range(0..9))
                .map(|_| Vector2::new(rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)))
                .collect();
            out.push(LandmarkFrame::new(f * 2, face, eye_left, eye_right, dots).unwrap());
        }
        LandmarkSequence::new(face_size, eye_size, out).unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        for seed in 0..20 {
            let seq = random_sequence(seed, 6);
            let parsed = LandmarkSequence::from_text(&seq.to_text()).unwrap();
            assert_eq!(seq, parsed);
        }
    }

    #[test]
    fn awkward_floats_survive() {
        let face = vec![
            Landmark2d::new(
                label(LandmarkGroup::Mouth, 0),
                Vector2::new(0.1 + 0.2, 239.999_999_999_999_97),
                true,
            ),
            Landmark2d::new(
                label(LandmarkGroup::Mouth, 1),
                Vector2::new(1e-300, f64::MIN_POSITIVE),
                true,
            ),
            Landmark2d::new(
                label(LandmarkGroup::Mouth, 2),
                Vector2::new(-1234.567_890_123_456_7, 9.87e12),
                false,
            ),
        ];
        let frame = LandmarkFrame::new(5, face, vec![], vec![], vec![]).unwrap();
        let seq = LandmarkSequence::new((320, 240), (160, 120), vec![frame]).unwrap();
        let parsed = LandmarkSequence::from_text(&seq.to_text()).unwrap();
        assert_eq!(seq, parsed);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("capture.lms");
        let seq = random_sequence(99, 4);
        seq.save(&path).unwrap();
        assert_eq!(LandmarkSequence::load(&path).unwrap(), seq);
    }

    #[test]
    fn reports_line_numbers_on_bad_input() {
        let seq = random_sequence(3, 2);
        let mut text = seq.to_text();

        let missing_header = LandmarkSequence::from_text(&text["# landmark sequence\n".len()..]);
        assert!(matches!(missing_header, Err(TrackingError::Parse { line: 1, .. })));

        text = text.replace("version 1", "version 7");
        let bad_version = LandmarkSequence::from_text(&text);
        assert!(matches!(bad_version, Err(TrackingError::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_malformed_bodies() {
        let base = random_sequence(4, 1).to_text();

        let truncated = &base[..base.len() - 5];
        assert!(matches!(
            LandmarkSequence::from_text(truncated),
            Err(TrackingError::Parse { .. })
        ));

        let bad_flag = base.replacen(" 1\n", " 2\n", 1);
        if bad_flag != base {
            assert!(LandmarkSequence::from_text(&bad_flag).is_err());
        }

        let bad_label = base.replace("mouth:", "cheek:");
        if bad_label != base {
            assert!(matches!(
                LandmarkSequence::from_text(&bad_label),
                Err(TrackingError::Parse { .. })
            ));
        }

        let trailing = format!("{base}\nstray line\n");
        assert!(matches!(
            LandmarkSequence::from_text(&trailing),
            Err(TrackingError::Parse { .. })
        ));
    }

    #[test]
    fn bounds_checked_for_visible_landmarks_only() {
        let outside =
            vec![Landmark2d::new(label(LandmarkGroup::Mouth, 0), Vector2::new(320.0, 10.0), true)];
        let frame = LandmarkFrame::new(0, outside, vec![], vec![], vec![]).unwrap();
        let err = LandmarkSequence::new((320, 240), (160, 120), vec![frame]);
        assert!(matches!(err, Err(TrackingError::OutOfBounds { .. })));

        let hidden = vec![Landmark2d::new(
            label(LandmarkGroup::Mouth, 0),
            Vector2::new(-999.0, 4000.0),
            false,
        )];
        let frame = LandmarkFrame::new(0, hidden, vec![], vec![], vec![]).unwrap();
        assert!(LandmarkSequence::new((320, 240), (160, 120), vec![frame]).is_ok());
    }

    #[test]
    fn frame_ids_must_increase() {
        let mk = |id| LandmarkFrame::new(id, vec![], vec![], vec![], vec![]).unwrap();
        let err = LandmarkSequence::new((320, 240), (160, 120), vec![mk(3), mk(3)]);
        assert!(matches!(err, Err(TrackingError::FrameOrder { prev: 3, got: 3 })));
    }
}
