use super::tables::{encoding_table, HuffmanSpec, AC_CHROMA, AC_LUMA, DC_CHROMA, DC_LUMA, ZIGZAG};
use super::transform::{analyze, Frame};
use super::{quant_tables_for_quality, JpegConfig};
use crate::error::{Error, Result};
use crate::image::Image;

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        BitWriter {
            out,
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, bits: u16, len: u8) {
        debug_assert!(len <= 16);
        self.acc = (self.acc << len) | (bits as u32 & ((1u32 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xff {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits) - 1;
    }

    /// Pads the final byte with one bits.
    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1u16 << pad) - 1, pad);
        }
        self.out
    }
}

fn magnitude(v: i32) -> (u16, u8) {
    let size = (32 - v.unsigned_abs().leading_zeros()) as u8;
    let bits = if v < 0 { (v - 1) as u16 } else { v as u16 };
    (bits, size)
}

fn marker(out: &mut Vec<u8>, m: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, m]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn huffman_segment(class: u8, slot: u8, spec: &HuffmanSpec) -> Vec<u8> {
    let mut p = vec![(class << 4) | slot];
    p.extend_from_slice(spec.counts);
    p.extend_from_slice(spec.symbols);
    p
}

/// Encodes an RGB image (channels in `[0, 1]`, rounded to 8 bits) as a
/// baseline JFIF stream.
pub fn jpeg_encode(image: &Image, cfg: &JpegConfig) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(Error::shape(format!(
            "JPEG encoding needs RGB, got {} channels",
            image.channels()
        )));
    }
    let tables = quant_tables_for_quality(cfg.quality)?;
    let samples: Vec<f64> = image
        .data()
        .iter()
        .map(|&v| crate::image::to_u8(v) as f64)
        .collect();
    let frame = analyze(&samples, image.width(), image.height(), cfg, &tables, true);
    encode_frame(&frame)
}

/// Serializes quantized coefficients with the standard Huffman tables.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    if frame.width > u16::MAX as usize || frame.height > u16::MAX as usize {
        return Err(Error::shape(format!(
            "{}x{} exceeds JPEG limits",
            frame.width, frame.height
        )));
    }
    let mut out = vec![0xff, 0xd8];
    marker(
        &mut out,
        0xe0,
        b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00",
    );
    for slot in 0..2u8 {
        let mut p = vec![slot];
        p.extend(ZIGZAG.iter().map(|&n| frame.tables[slot as usize][n] as u8));
        marker(&mut out, 0xdb, &p);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(frame.height as u16).to_be_bytes());
    sof.extend_from_slice(&(frame.width as u16).to_be_bytes());
    sof.push(frame.components.len() as u8);
    for c in &frame.components {
        sof.extend_from_slice(&[c.id, ((c.h as u8) << 4) | c.v as u8, c.table as u8]);
    }
    marker(&mut out, 0xc0, &sof);
    for (class, slot, spec) in [
        (0, 0, &DC_LUMA),
        (1, 0, &AC_LUMA),
        (0, 1, &DC_CHROMA),
        (1, 1, &AC_CHROMA),
    ] {
        marker(&mut out, 0xc4, &huffman_segment(class, slot, spec));
    }
    let mut sos = vec![frame.components.len() as u8];
    for c in &frame.components {
        let t = c.table as u8;
        sos.extend_from_slice(&[c.id, (t << 4) | t]);
    }
    sos.extend_from_slice(&[0, 63, 0]);
    marker(&mut out, 0xda, &sos);

    let dc = [encoding_table(&DC_LUMA), encoding_table(&DC_CHROMA)];
    let ac = [encoding_table(&AC_LUMA), encoding_table(&AC_CHROMA)];
    let mut w = BitWriter::new(out);
    let mut pred = vec![0i32; frame.components.len()];
    let (mx, my) = frame.mcus();
    for mcu_y in 0..my {
        for mcu_x in 0..mx {
            for (ci, c) in frame.components.iter().enumerate() {
                for v in 0..c.v {
                    for h in 0..c.h {
                        let block = c.block(mcu_x * c.h + h, mcu_y * c.v + v);
                        let t = c.table.min(1);
                        encode_block(&mut w, block, &mut pred[ci], &dc[t], &ac[t]);
                    }
                }
            }
        }
    }
    let mut out = w.finish();
    out.extend_from_slice(&[0xff, 0xd9]);
    Ok(out)
}

fn encode_block(
    w: &mut BitWriter,
    block: &[f64],
    pred: &mut i32,
    dc: &[(u16, u8); 256],
    ac: &[(u16, u8); 256],
) {
    let dcv = block[0] as i32;
    let (bits, size) = magnitude(dcv - *pred);
    *pred = dcv;
    let (code, len) = dc[size as usize];
    w.put(code, len);
    w.put(bits, size);
    let mut run = 0;
    for &n in &ZIGZAG[1..] {
        let v = block[n] as i32;
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (code, len) = ac[0xf0];
            w.put(code, len);
            run -= 16;
        }
        let (bits, size) = magnitude(v);
        let (code, len) = ac[(run << 4) | size as usize];
        w.put(code, len);
        w.put(bits, size);
        run = 0;
    }
    if run > 0 {
        let (code, len) = ac[0x00];
        w.put(code, len);
    }
}
