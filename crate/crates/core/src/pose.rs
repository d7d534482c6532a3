//! Pose-sequence ingestion: keypoint-file parsing, missing-detection repair,
//! body-frame normalization and the canonical sequence file format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::NUM_JOINTS;

/// COCO-18 landmark indices used throughout the crate.
pub mod joints {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const RIGHT_SHOULDER: usize = 2;
    pub const RIGHT_ELBOW: usize = 3;
    pub const RIGHT_WRIST: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const LEFT_ELBOW: usize = 6;
    pub const LEFT_WRIST: usize = 7;
    pub const RIGHT_HIP: usize = 8;
    pub const RIGHT_KNEE: usize = 9;
    pub const RIGHT_ANKLE: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const LEFT_KNEE: usize = 12;
    pub const LEFT_ANKLE: usize = 13;
    pub const RIGHT_EYE: usize = 14;
    pub const LEFT_EYE: usize = 15;
    pub const RIGHT_EAR: usize = 16;
    pub const LEFT_EAR: usize = 17;
}

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "Nose",
    "Neck",
    "Right Shoulder",
    "Right Elbow",
    "Right Wrist",
    "Left Shoulder",
    "Left Elbow",
    "Left Wrist",
    "Right Hip",
    "Right Knee",
    "Right Ankle",
    "Left Hip",
    "Left Knee",
    "Left Ankle",
    "Right Eye",
    "Left Eye",
    "Right Ear",
    "Left Ear",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn missing() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            confidence: 0.0,
        }
    }

    /// A keypoint at exactly (0, 0) is a failed detection.
    pub fn is_missing(&self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub keypoints: Vec<Keypoint>,
}

impl PoseFrame {
    pub fn all_missing() -> Self {
        PoseFrame {
            keypoints: vec![Keypoint::missing(); NUM_JOINTS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn to_field(label: Option<Label>) -> &'static str {
        match label {
            None => "none",
            Some(Label::Normal) => "normal",
            Some(Label::Abnormal) => "abnormal",
        }
    }

    pub fn from_field(s: &str) -> Result<Option<Label>> {
        match s {
            "none" => Ok(None),
            "normal" => Ok(Some(Label::Normal)),
            "abnormal" => Ok(Some(Label::Abnormal)),
            other => Err(Error::Format(format!("unknown label '{other}'"))),
        }
    }

    /// Class index with abnormal as the positive class.
    pub fn class_index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub fps: f64,
    pub subject_id: String,
    pub label: Option<Label>,
    /// Joints that were missing in every frame; their trajectories are
    /// all-zero and are skipped by normalization and noise injection.
    pub missing_joints: Vec<usize>,
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>, fps: f64, subject_id: String, label: Option<Label>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Param("sequence has no frames".into()));
        }
        if !(24.0..=60.0).contains(&fps) {
            return Err(Error::Param(format!("fps {fps} outside the supported 24-60 range")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.keypoints.len() != NUM_JOINTS {
                return Err(Error::Format(format!(
                    "frame {i} has {} keypoints, expected {NUM_JOINTS}",
                    f.keypoints.len()
                )));
            }
        }
        Ok(PoseSequence {
            frames,
            fps,
            subject_id,
            label,
            missing_joints: Vec::new(),
        })
    }
}

/// Parse one keypoint file into a frame. Accepts a bare flat array of
/// 54 numbers (x, y, confidence per joint), an array of such arrays (one per
/// person), or an object with a `people` list carrying `pose_keypoints_2d`
/// arrays. The first detected person is used; zero persons yield an
/// all-missing frame.
pub fn parse_keypoint_frame(text: &str) -> Result<PoseFrame> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let person: Option<&serde_json::Value> = match &value {
        serde_json::Value::Array(items) => {
            if items.iter().all(|v| v.is_number()) {
                Some(&value)
            } else {
                items.first()
            }
        }
        serde_json::Value::Object(map) => {
            let people = map
                .get("people")
                .and_then(|p| p.as_array())
                .ok_or_else(|| Error::Format("object input lacks a 'people' array".into()))?;
            match people.first() {
                None => None,
                Some(p) => Some(
                    p.get("pose_keypoints_2d")
                        .ok_or_else(|| Error::Format("person lacks 'pose_keypoints_2d'".into()))?,
                ),
            }
        }
        _ => return Err(Error::Format("keypoint file is neither an array nor an object".into())),
    };
    let Some(person) = person else {
        return Ok(PoseFrame::all_missing());
    };
    let numbers = person
        .as_array()
        .ok_or_else(|| Error::Format("keypoint list is not an array".into()))?;
    if numbers.len() % 3 != 0 {
        return Err(Error::Format(format!(
            "keypoint count {} is not a multiple of 3",
            numbers.len()
        )));
    }
    if numbers.len() != NUM_JOINTS * 3 {
        return Err(Error::Format(format!(
            "expected {} numbers (18 joints x 3), got {}",
            NUM_JOINTS * 3,
            numbers.len()
        )));
    }
    let mut keypoints = Vec::with_capacity(NUM_JOINTS);
    for triple in numbers.chunks(3) {
        let get = |v: &serde_json::Value| -> Result<f64> {
            v.as_f64()
                .ok_or_else(|| Error::Format(format!("non-numeric keypoint entry '{v}'")))
        };
        keypoints.push(Keypoint {
            x: get(&triple[0])?,
            y: get(&triple[1])?,
            confidence: get(&triple[2])?,
        });
    }
    Ok(PoseFrame { keypoints })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

/// Replace missing detections by per-joint linear interpolation in time.
/// Keypoints are missing when at exactly (0,0), or when a positive
/// `conf_threshold` is set and the confidence is at or below it. Leading and
/// trailing gaps hold the nearest non-missing value; joints missing in every
/// frame become all-zero trajectories flagged in `missing_joints`.
pub fn interpolate_missing(seq: &PoseSequence, conf_threshold: f64) -> Result<PoseSequence> {
    if !(0.0..1.0).contains(&conf_threshold) {
        return Err(Error::Param(format!(
            "confidence threshold {conf_threshold} outside [0,1)"
        )));
    }
    let n = seq.frames.len();
    let mut out = seq.clone();
    let mut missing_joints = Vec::new();
    let is_missing = |kp: &Keypoint| kp.is_missing() || (conf_threshold > 0.0 && kp.confidence <= conf_threshold);
    for joint in 0..NUM_JOINTS {
        let present: Vec<usize> = (0..n)
            .filter(|&f| !is_missing(&seq.frames[f].keypoints[joint]))
            .collect();
        if present.is_empty() {
            for f in 0..n {
                out.frames[f].keypoints[joint] = Keypoint::missing();
            }
            missing_joints.push(joint);
            continue;
        }
        for f in 0..n {
            if !is_missing(&seq.frames[f].keypoints[joint]) {
                continue;
            }
            let next = present.iter().copied().find(|&p| p > f);
            let prev = present.iter().copied().rev().find(|&p| p < f);
            out.frames[f].keypoints[joint] = match (prev, next) {
                (Some(a), Some(b)) => {
                    let t = (f - a) as f64 / (b - a) as f64;
                    let ka = seq.frames[a].keypoints[joint];
                    let kb = seq.frames[b].keypoints[joint];
                    Keypoint {
                        x: ka.x + (kb.x - ka.x) * t,
                        y: ka.y + (kb.y - ka.y) * t,
                        confidence: ka.confidence + (kb.confidence - ka.confidence) * t,
                    }
                }
                (None, Some(b)) => seq.frames[b].keypoints[joint],
                (Some(a), None) => seq.frames[a].keypoints[joint],
                (None, None) => unreachable!(),
            };
        }
    }
    out.missing_joints = missing_joints;
    Ok(out)
}

/// Per-frame body-frame normalization: subtract the centroid of
/// {neck, right hip, left hip} from every joint, then rotate about the
/// origin so the origin-to-neck vector lies on the +y axis. Scale is left
/// untouched. Joints flagged missing-everywhere stay all-zero.
pub fn normalize_global(seq: &PoseSequence) -> Result<PoseSequence> {
    let anchors = [joints::NECK, joints::RIGHT_HIP, joints::LEFT_HIP];
    let mut degenerate = Vec::new();
    let mut out = seq.clone();
    let skip: Vec<bool> = {
        let mut v = vec![false; NUM_JOINTS];
        for &j in &seq.missing_joints {
            v[j] = true;
        }
        v
    };
    for (fi, frame) in seq.frames.iter().enumerate() {
        for &a in &anchors {
            if frame.keypoints[a].is_missing() {
                return Err(Error::Param(format!(
                    "frame {fi}: anchor joint {a} missing; run interpolation first"
                )));
            }
        }
        let cx = anchors.iter().map(|&a| frame.keypoints[a].x).sum::<f64>() / 3.0;
        let cy = anchors.iter().map(|&a| frame.keypoints[a].y).sum::<f64>() / 3.0;
        let nx = frame.keypoints[joints::NECK].x - cx;
        let ny = frame.keypoints[joints::NECK].y - cy;
        let r = (nx * nx + ny * ny).sqrt();
        if r < 1e-12 {
            degenerate.push(fi);
            continue;
        }
        // rotation sending (nx, ny) to (0, r)
        let (cos_t, sin_t) = (ny / r, nx / r);
        for (j, kp) in out.frames[fi].keypoints.iter_mut().enumerate() {
            if skip[j] {
                *kp = Keypoint::missing();
                continue;
            }
            let px = frame.keypoints[j].x - cx;
            let py = frame.keypoints[j].y - cy;
            kp.x = cos_t * px - sin_t * py;
            kp.y = sin_t * px + cos_t * py;
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateFrames(degenerate));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Canonical sequence file: header + per-frame 18x(x,y) rows.

const SEQ_MAGIC: &str = "seqfile v1";

pub fn sequence_to_text(seq: &PoseSequence) -> Result<String> {
    if seq.subject_id.is_empty() || seq.subject_id.chars().any(|c| c.is_whitespace()) {
        return Err(Error::Format(format!(
            "subject id '{}' must be non-empty and whitespace-free",
            seq.subject_id
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{SEQ_MAGIC}");
    let _ = writeln!(out, "subject {}", seq.subject_id);
    let _ = writeln!(out, "fps {}", seq.fps);
    let _ = writeln!(out, "label {}", Label::to_field(seq.label));
    let _ = writeln!(out, "frames {}", seq.frames.len());
    if seq.missing_joints.is_empty() {
        let _ = writeln!(out, "missing none");
    } else {
        let list: Vec<String> = seq.missing_joints.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(out, "missing {}", list.join(" "));
    }
    for frame in &seq.frames {
        let row: Vec<String> = frame
            .keypoints
            .iter()
            .flat_map(|kp| [format!("{}", kp.x), format!("{}", kp.y)])
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

pub fn sequence_from_text(text: &str) -> Result<PoseSequence> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != SEQ_MAGIC {
        return Err(Error::Format(format!("unsupported sequence header '{header}'")));
    }
    let field = |line: Option<&str>, key: &str| -> Result<String> {
        let line = line.ok_or_else(|| Error::Format(format!("missing '{key}' line")))?;
        line.strip_prefix(key)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Format(format!("expected '{key}' line, got '{line}'")))
    };
    let subject_id = field(lines.next(), "subject")?;
    let fps: f64 = field(lines.next(), "fps")?
        .parse()
        .map_err(|_| Error::Format("bad fps".into()))?;
    let label = Label::from_field(&field(lines.next(), "label")?)?;
    let count: usize = field(lines.next(), "frames")?
        .parse()
        .map_err(|_| Error::Format("bad frame count".into()))?;
    let missing_field = field(lines.next(), "missing")?;
    let missing_joints: Vec<usize> = if missing_field == "none" {
        Vec::new()
    } else {
        missing_field
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad missing joint '{s}'"))))
            .collect::<Result<_>>()?
    };
    let mut frames = Vec::with_capacity(count);
    for fi in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing frame row {fi}")))?;
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad coordinate '{s}'"))))
            .collect::<Result<_>>()?;
        if nums.len() != NUM_JOINTS * 2 {
            return Err(Error::Format(format!(
                "frame row {fi} has {} numbers, expected {}",
                nums.len(),
                NUM_JOINTS * 2
            )));
        }
        let keypoints = nums
            .chunks(2)
            .map(|xy| Keypoint {
                x: xy[0],
                y: xy[1],
                confidence: 1.0,
            })
            .collect();
        frames.push(PoseFrame { keypoints });
    }
    let mut seq = PoseSequence::new(frames, fps, subject_id, label)?;
    seq.missing_joints = missing_joints;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn frame_with(entries: &[(usize, f64, f64, f64)]) -> PoseFrame {
        let mut f = PoseFrame::all_missing();
        for &(j, x, y, c) in entries {
            f.keypoints[j] = Keypoint { x, y, confidence: c };
        }
        f
    }

    fn seq_of(frames: Vec<PoseFrame>) -> PoseSequence {
        PoseSequence::new(frames, 25.0, "s".into(), Some(Label::Normal)).unwrap()
    }

    #[test]
    fn parse_all_zero_frame() {
        let text = serde_json::to_string(&vec![0.0; 54]).unwrap();
        let frame = parse_keypoint_frame(&text).unwrap();
        assert!(frame.keypoints.iter().all(|k| k.is_missing()));
    }

    #[test]
    fn parse_single_joint() {
        let mut nums = vec![0.0; 54];
        nums[3] = 100.0;
        nums[4] = 200.0;
        nums[5] = 0.9;
        let frame = parse_keypoint_frame(&serde_json::to_string(&nums).unwrap()).unwrap();
        assert_eq!(frame.keypoints[joints::NECK].x, 100.0);
        assert_eq!(frame.keypoints[joints::NECK].y, 200.0);
        for (j, kp) in frame.keypoints.iter().enumerate() {
            if j != joints::NECK {
                assert!(kp.is_missing());
            }
        }
    }

    #[test]
    fn parse_two_persons_takes_first() {
        let mut first = vec![0.0; 54];
        first[0] = 10.0;
        first[1] = 20.0;
        first[2] = 0.8;
        let mut second = vec![0.0; 54];
        second[0] = 99.0;
        second[1] = 88.0;
        second[2] = 0.7;
        let text = format!(
            "{{\"people\":[{{\"pose_keypoints_2d\":{}}},{{\"pose_keypoints_2d\":{}}}]}}",
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap()
        );
        let frame = parse_keypoint_frame(&text).unwrap();
        assert_eq!(frame.keypoints[joints::NOSE].x, 10.0);
    }

    #[test]
    fn parse_no_persons_is_all_missing() {
        let frame = parse_keypoint_frame("{\"people\":[]}").unwrap();
        assert!(frame.keypoints.iter().all(|k| k.is_missing()));
    }

    #[test]
    fn parse_errors() {
        match parse_keypoint_frame("[1, 2,") {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        let not_multiple = serde_json::to_string(&vec![0.0; 53]).unwrap();
        assert!(matches!(parse_keypoint_frame(&not_multiple), Err(Error::Format(_))));
    }

    #[test]
    fn interpolate_midpoint() {
        let seq = seq_of(vec![
            frame_with(&[(joints::NOSE, 0.0, 10.0, 1.0)]),
            frame_with(&[]),
            frame_with(&[(joints::NOSE, 0.0, 30.0, 1.0)]),
        ]);
        let fixed = interpolate_missing(&seq, 0.0).unwrap();
        let kp = fixed.frames[1].keypoints[joints::NOSE];
        assert!((kp.x - 0.0).abs() < 1e-12 && (kp.y - 20.0).abs() < 1e-12);
    }

    #[test]
    fn interpolate_edge_hold() {
        let seq = seq_of(vec![
            frame_with(&[]),
            frame_with(&[]),
            frame_with(&[(joints::NOSE, 5.0, 5.0, 1.0)]),
        ]);
        let fixed = interpolate_missing(&seq, 0.0).unwrap();
        for f in 0..2 {
            let kp = fixed.frames[f].keypoints[joints::NOSE];
            assert_eq!((kp.x, kp.y), (5.0, 5.0));
        }
    }

    #[test]
    fn interpolate_all_missing_joint_flagged() {
        let seq = seq_of(vec![
            frame_with(&[(joints::NECK, 1.0, 1.0, 1.0)]),
            frame_with(&[(joints::NECK, 2.0, 2.0, 1.0)]),
        ]);
        let fixed = interpolate_missing(&seq, 0.0).unwrap();
        assert!(fixed.missing_joints.contains(&joints::NOSE));
        assert!(!fixed.missing_joints.contains(&joints::NECK));
    }

    /// Independent piecewise-linear oracle: for each masked index, scan
    /// outward for the nearest present neighbors and interpolate directly.
    fn oracle_fill(values: &[Option<(f64, f64)>]) -> Vec<(f64, f64)> {
        let n = values.len();
        (0..n)
            .map(|i| {
                if let Some(v) = values[i] {
                    return v;
                }
                let prev = (0..i).rev().find(|&j| values[j].is_some());
                let next = (i + 1..n).find(|&j| values[j].is_some());
                match (prev, next) {
                    (Some(a), Some(b)) => {
                        let (xa, ya) = values[a].unwrap();
                        let (xb, yb) = values[b].unwrap();
                        let t = (i - a) as f64 / (b - a) as f64;
                        (xa + (xb - xa) * t, ya + (yb - ya) * t)
                    }
                    (None, Some(b)) => values[b].unwrap(),
                    (Some(a), None) => values[a].unwrap(),
                    (None, None) => (0.0, 0.0),
                }
            })
            .collect()
    }

    #[test]
    fn interpolate_matches_oracle_on_masked_sequences() {
        let mut rng = RngStream::new(31);
        for _ in 0..100 {
            let n = 20 + (rng.next_u64() % 30) as usize;
            let mut per_joint: Vec<Vec<Option<(f64, f64)>>> = Vec::new();
            let mut frames = Vec::new();
            for _ in 0..NUM_JOINTS {
                per_joint.push(Vec::new());
            }
            for _ in 0..n {
                let mut frame = PoseFrame::all_missing();
                for (j, kp) in frame.keypoints.iter_mut().enumerate() {
                    if rng.next_f64() < 0.2 {
                        per_joint[j].push(None);
                    } else {
                        let x = rng.uniform(1.0, 100.0);
                        let y = rng.uniform(1.0, 100.0);
                        *kp = Keypoint { x, y, confidence: 1.0 };
                        per_joint[j].push(Some((x, y)));
                    }
                }
                frames.push(frame);
            }
            let seq = seq_of(frames);
            let fixed = interpolate_missing(&seq, 0.0).unwrap();
            for j in 0..NUM_JOINTS {
                let expect = oracle_fill(&per_joint[j]);
                for f in 0..n {
                    let kp = fixed.frames[f].keypoints[j];
                    assert_eq!((kp.x, kp.y), expect[f], "joint {j} frame {f}");
                }
            }
        }
    }

    #[test]
    fn interpolate_idempotent() {
        let mut rng = RngStream::new(8);
        let frames: Vec<PoseFrame> = (0..30)
            .map(|_| {
                let mut f = PoseFrame::all_missing();
                for kp in f.keypoints.iter_mut() {
                    if rng.next_f64() < 0.7 {
                        *kp = Keypoint {
                            x: rng.uniform(1.0, 50.0),
                            y: rng.uniform(1.0, 50.0),
                            confidence: 1.0,
                        };
                    }
                }
                f
            })
            .collect();
        let seq = seq_of(frames);
        let once = interpolate_missing(&seq, 0.0).unwrap();
        let twice = interpolate_missing(&once, 0.0).unwrap();
        assert_eq!(once, twice);
    }

    fn full_frame(rng: &mut RngStream) -> PoseFrame {
        PoseFrame {
            keypoints: (0..NUM_JOINTS)
                .map(|_| Keypoint {
                    x: rng.uniform(10.0, 300.0),
                    y: rng.uniform(10.0, 300.0),
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn normalize_centroid_and_neck_axis() {
        let mut rng = RngStream::new(4);
        let seq = seq_of(vec![full_frame(&mut rng)]);
        let out = normalize_global(&seq).unwrap();
        let f = &out.frames[0];
        let cx = (f.keypoints[1].x + f.keypoints[8].x + f.keypoints[11].x) / 3.0;
        let cy = (f.keypoints[1].y + f.keypoints[8].y + f.keypoints[11].y) / 3.0;
        assert!(cx.abs() < 1e-9 && cy.abs() < 1e-9);
        assert!(f.keypoints[1].x.abs() < 1e-9);
        assert!(f.keypoints[1].y >= 0.0);
    }

    #[test]
    fn normalize_rigid_motion_invariance() {
        let mut rng = RngStream::new(14);
        for _ in 0..50 {
            let base = full_frame(&mut rng);
            let (dx, dy) = (rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0));
            let angle = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
            let (c, s) = (angle.cos(), angle.sin());
            let moved = PoseFrame {
                keypoints: base
                    .keypoints
                    .iter()
                    .map(|kp| Keypoint {
                        x: c * kp.x - s * kp.y + dx,
                        y: s * kp.x + c * kp.y + dy,
                        confidence: 1.0,
                    })
                    .collect(),
            };
            let a = normalize_global(&seq_of(vec![base])).unwrap();
            let b = normalize_global(&seq_of(vec![moved])).unwrap();
            for (ka, kb) in a.frames[0].keypoints.iter().zip(&b.frames[0].keypoints) {
                assert!((ka.x - kb.x).abs() < 1e-9 && (ka.y - kb.y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_preserves_pairwise_distances() {
        let mut rng = RngStream::new(21);
        let frame = full_frame(&mut rng);
        let out = normalize_global(&seq_of(vec![frame.clone()])).unwrap();
        for i in 0..NUM_JOINTS {
            for j in i + 1..NUM_JOINTS {
                let before = ((frame.keypoints[i].x - frame.keypoints[j].x).powi(2)
                    + (frame.keypoints[i].y - frame.keypoints[j].y).powi(2))
                .sqrt();
                let fa = &out.frames[0].keypoints[i];
                let fb = &out.frames[0].keypoints[j];
                let after = ((fa.x - fb.x).powi(2) + (fa.y - fb.y).powi(2)).sqrt();
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_degenerate_frame_reports_indices() {
        // place neck at the hip centroid: neck = (0,0), hips symmetric
        let mut f = PoseFrame::all_missing();
        for kp in f.keypoints.iter_mut() {
            *kp = Keypoint { x: 1.0, y: 1.0, confidence: 1.0 };
        }
        f.keypoints[joints::NECK] = Keypoint { x: 2.0, y: 2.0, confidence: 1.0 };
        f.keypoints[joints::RIGHT_HIP] = Keypoint { x: 1.0, y: 1.0, confidence: 1.0 };
        f.keypoints[joints::LEFT_HIP] = Keypoint { x: 3.0, y: 3.0, confidence: 1.0 };
        match normalize_global(&seq_of(vec![f])) {
            Err(Error::DegenerateFrames(frames)) => assert_eq!(frames, vec![0]),
            other => panic!("expected degenerate-frame error, got {other:?}"),
        }
    }

    #[test]
    fn sequence_roundtrip_bit_identical() {
        let mut rng = RngStream::new(77);
        let frames: Vec<PoseFrame> = (0..5).map(|_| full_frame(&mut rng)).collect();
        let mut seq = seq_of(frames);
        seq.missing_joints = vec![16, 17];
        let text = sequence_to_text(&seq).unwrap();
        let back = sequence_from_text(&text).unwrap();
        assert_eq!(back.subject_id, seq.subject_id);
        assert_eq!(back.fps, seq.fps);
        assert_eq!(back.label, seq.label);
        assert_eq!(back.missing_joints, seq.missing_joints);
        for (fa, fb) in seq.frames.iter().zip(&back.frames) {
            for (ka, kb) in fa.keypoints.iter().zip(&fb.keypoints) {
                assert_eq!(ka.x.to_bits(), kb.x.to_bits());
                assert_eq!(ka.y.to_bits(), kb.y.to_bits());
            }
        }
        // and the re-serialization is byte-identical
        assert_eq!(sequence_to_text(&back).unwrap(), text);
    }
}
