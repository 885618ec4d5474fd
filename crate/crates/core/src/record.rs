//! Detection records as sent over the radio link.
//!
//! Binary layout (little-endian, 20 bytes):
//!
//! | offset | size | field           |
//! |-------:|-----:|-----------------|
//! | 0      | 4    | device_id (u32) |
//! | 4      | 4    | seq (u32)       |
//! | 8      | 4    | epoch_seconds (u32) |
//! | 12     | 4    | score (f32, IEEE-754) |
//! | 16     | 1    | class (u8)      |
//! | 17     | 1    | mode (u8, 0 = predict, 1 = train) |
//! | 18     | 2    | reserved (u16, zero) |

use serde::{Deserialize, Serialize};

use crate::ensemble::{Detection, Mode};
use crate::error::{OdlError, Result};

pub const RECORD_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub device_id: u32,
    pub seq: u32,
    pub epoch_seconds: u32,
    pub score: f32,
    pub class: u8,
    pub mode: Mode,
    #[serde(default)]
    pub reserved: u16,
}

impl DetectionRecord {
    pub fn from_detection(device_id: u32, seq: u32, epoch_seconds: u32, det: &Detection) -> Result<Self> {
        let class = u8::try_from(det.class)
            .map_err(|_| OdlError::invalid(format!("class {} does not fit in a byte", det.class)))?;
        Ok(Self {
            device_id,
            seq,
            epoch_seconds,
            score: det.score as f32,
            class,
            mode: det.mode,
            reserved: 0,
        })
    }

    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut out = [0u8; RECORD_LEN];
        out[0..4].copy_from_slice(&self.device_id.to_le_bytes());
        out[4..8].copy_from_slice(&self.seq.to_le_bytes());
        out[8..12].copy_from_slice(&self.epoch_seconds.to_le_bytes());
        out[12..16].copy_from_slice(&self.score.to_le_bytes());
        out[16] = self.class;
        out[17] = self.mode.code();
        out[18..20].copy_from_slice(&self.reserved.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let b: &[u8; RECORD_LEN] = bytes
            .try_into()
            .map_err(|_| OdlError::invalid(format!("record must be {RECORD_LEN} bytes, got {}", bytes.len())))?;
        let u32_at = |o: usize| u32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);
        Ok(Self {
            device_id: u32_at(0),
            seq: u32_at(4),
            epoch_seconds: u32_at(8),
            score: f32::from_bits(u32_at(12)),
            class: b[16],
            mode: Mode::from_code(b[17])
                .ok_or_else(|| OdlError::invalid(format!("unknown mode byte {}", b[17])))?,
            reserved: u16::from_le_bytes([b[18], b[19]]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_fixed() {
        let r = DetectionRecord {
            device_id: 0x0403_0201,
            seq: 5,
            epoch_seconds: 1_700_000_000,
            score: 1.5,
            class: 3,
            mode: Mode::Train,
            reserved: 0,
        };
        let b = r.to_bytes();
        assert_eq!(b.len(), 20);
        assert_eq!(&b[0..4], &[1, 2, 3, 4]);
        assert_eq!(&b[12..16], &1.5f32.to_le_bytes());
        assert_eq!(b[16], 3);
        assert_eq!(b[17], 1);
        assert_eq!(&b[18..], &[0, 0]);
        assert!(DetectionRecord::from_bytes(&b[..19]).is_err());
    }

    #[test]
    fn oversized_class_is_rejected() {
        let det = Detection {
            score: 0.1,
            class: 300,
            mode: Mode::Predict,
        };
        assert!(DetectionRecord::from_detection(0, 0, 0, &det).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(dev in any::<u32>(), seq in any::<u32>(), ts in any::<u32>(),
                            score in 0.0f32..1e6, class in any::<u8>(), train in any::<bool>()) {
            let r = DetectionRecord {
                device_id: dev, seq, epoch_seconds: ts, score, class,
                mode: if train { Mode::Train } else { Mode::Predict }, reserved: 0,
            };
            prop_assert_eq!(DetectionRecord::from_bytes(&r.to_bytes()).unwrap(), r);
        }
    }
}
