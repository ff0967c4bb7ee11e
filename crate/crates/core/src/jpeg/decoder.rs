use super::tables::ZIGZAG;
use super::transform::{synthesize, Component, Frame};
use crate::error::{Error, Result};
use crate::image::Image;

/// Canonical Huffman decoding table (per-length max code and value offset).
#[derive(Clone, Debug, Default)]
struct HuffTable {
    mincode: [i32; 17],
    maxcode: [i32; 18],
    valptr: [usize; 17],
    symbols: Vec<u8>,
}

impl HuffTable {
    fn new(counts: &[u8; 16], symbols: Vec<u8>) -> Self {
        let mut t = HuffTable {
            mincode: [0; 17],
            maxcode: [-1; 18],
            valptr: [0; 17],
            symbols,
        };
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = counts[len - 1] as usize;
            if n > 0 {
                t.valptr[len] = k;
                t.mincode[len] = code;
                code += n as i32;
                k += n;
                t.maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        t.maxcode[17] = i32::MAX;
        t
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    /// A marker was reached; further reads yield zero bits.
    at_marker: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        BitReader {
            data,
            pos,
            acc: 0,
            nbits: 0,
            at_marker: false,
        }
    }

    fn fill(&mut self) -> Result<()> {
        while self.nbits <= 24 {
            let byte = if self.at_marker {
                0
            } else {
                let b = *self
                    .data
                    .get(self.pos)
                    .ok_or_else(|| Error::jpeg(self.pos, "entropy-coded data runs past the end"))?;
                if b == 0xff {
                    match self.data.get(self.pos + 1) {
                        Some(0x00) => {
                            self.pos += 2;
                            0xff
                        }
                        Some(_) => {
                            self.at_marker = true;
                            0
                        }
                        None => return Err(Error::jpeg(self.pos, "truncated entropy-coded data")),
                    }
                } else {
                    self.pos += 1;
                    b
                }
            };
            self.acc |= (byte as u32) << (24 - self.nbits);
            self.nbits += 8;
        }
        Ok(())
    }

    fn bits(&mut self, n: u32) -> Result<u32> {
        if n == 0 {
            return Ok(0);
        }
        if self.nbits < n {
            self.fill()?;
        }
        let v = self.acc >> (32 - n);
        self.acc <<= n;
        self.nbits -= n;
        Ok(v)
    }

    fn decode(&mut self, t: &HuffTable) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | self.bits(1)? as i32;
            if code <= t.maxcode[len] {
                let idx = t.valptr[len] + (code - t.mincode[len]) as usize;
                return t
                    .symbols
                    .get(idx)
                    .copied()
                    .ok_or_else(|| Error::jpeg(self.pos, "Huffman code outside its table"));
            }
        }
        Err(Error::jpeg(self.pos, "invalid Huffman code"))
    }

    fn receive_extend(&mut self, size: u8) -> Result<i32> {
        if size == 0 {
            return Ok(0);
        }
        if size > 16 {
            return Err(Error::jpeg(
                self.pos,
                format!("coefficient size {size} too large"),
            ));
        }
        let v = self.bits(size as u32)? as i32;
        Ok(if v < (1 << (size - 1)) {
            v - (1 << size) + 1
        } else {
            v
        })
    }

    /// Drops buffered bits and consumes the expected restart marker.
    fn restart(&mut self, expected: u8) -> Result<()> {
        self.acc = 0;
        self.nbits = 0;
        self.at_marker = false;
        match (self.data.get(self.pos), self.data.get(self.pos + 1)) {
            (Some(0xff), Some(&m)) if m == 0xd0 + expected => {
                self.pos += 2;
                Ok(())
            }
            _ => Err(Error::jpeg(
                self.pos,
                format!("expected RST{expected} marker"),
            )),
        }
    }

    /// Position of the next marker after the scan.
    fn end(&self) -> usize {
        let mut p = self.pos;
        while p + 1 < self.data.len() && !(self.data[p] == 0xff && self.data[p + 1] != 0x00) {
            p += 1;
        }
        p
    }
}

struct Parser<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn u8(&mut self) -> Result<u8> {
        let v = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::jpeg(self.pos, "unexpected end of stream"))?;
        self.pos += 1;
        Ok(v)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(((self.u8()? as u16) << 8) | self.u8()? as u16)
    }

    /// Reads a segment length and returns the payload range.
    fn segment(&mut self) -> Result<(usize, usize)> {
        let at = self.pos;
        let len = self.u16()? as usize;
        if len < 2 || at + len > self.data.len() {
            return Err(Error::jpeg(
                at,
                format!("segment length {len} out of range"),
            ));
        }
        self.pos = at + len;
        Ok((at + 2, at + len))
    }
}

/// Decodes a baseline (or extended sequential Huffman, 8-bit) JPEG.
///
/// Gray images are returned with the luma replicated into RGB.
pub fn jpeg_decode(bytes: &[u8]) -> Result<Image> {
    let frame = decode_frame(bytes)?;
    let rgb = synthesize(&frame);
    let data = rgb
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as f32 / 255.0)
        .collect();
    Image::new(frame.width, frame.height, 3, data)
}

/// Parses a stream down to its quantized coefficients.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let mut p = Parser {
        data: bytes,
        pos: 0,
    };
    if p.u16()? != 0xffd8 {
        return Err(Error::jpeg(0, "missing start-of-image marker"));
    }
    let mut tables = [[0u16; 64]; 4];
    let mut defined = [false; 4];
    let mut dc_tables: [Option<HuffTable>; 4] = Default::default();
    let mut ac_tables: [Option<HuffTable>; 4] = Default::default();
    let mut frame: Option<Frame> = None;
    let mut restart_interval = 0usize;
    let mut scanned = false;
    loop {
        let at = p.pos;
        let mut m = p.u8()?;
        if m != 0xff {
            return Err(Error::jpeg(at, format!("expected marker, found 0x{m:02x}")));
        }
        while m == 0xff {
            m = p.u8()?;
        }
        match m {
            0xd9 => break,
            0xd8 => return Err(Error::jpeg(at, "nested start-of-image marker")),
            0xc0 | 0xc1 => {
                if frame.is_some() {
                    return Err(Error::jpeg(at, "more than one frame header"));
                }
                let (s, e) = p.segment()?;
                frame = Some(parse_sof(&bytes[s..e], s)?);
            }
            0xc2 | 0xc6 | 0xca | 0xce => {
                return Err(Error::JpegUnsupported {
                    offset: at,
                    message: "progressive JPEG".into(),
                })
            }
            0xc3 | 0xc5 | 0xc7 | 0xc9 | 0xcb | 0xcd | 0xcf => {
                return Err(Error::JpegUnsupported {
                    offset: at,
                    message: format!(
                        "frame type 0x{m:02x} (lossless, hierarchical or arithmetic coding)"
                    ),
                })
            }
            0xc4 => {
                let (s, e) = p.segment()?;
                let mut i = s;
                while i < e {
                    let tc = bytes[i] >> 4;
                    let th = (bytes[i] & 15) as usize;
                    if tc > 1 || th > 3 || i + 17 > e {
                        return Err(Error::jpeg(i, "bad Huffman table header"));
                    }
                    let counts: [u8; 16] = bytes[i + 1..i + 17].try_into().expect("16 bytes");
                    let n: usize = counts.iter().map(|&c| c as usize).sum();
                    if n > 256 || i + 17 + n > e {
                        return Err(Error::jpeg(i, "Huffman table overruns its segment"));
                    }
                    let t = HuffTable::new(&counts, bytes[i + 17..i + 17 + n].to_vec());
                    if tc == 0 {
                        dc_tables[th] = Some(t);
                    } else {
                        ac_tables[th] = Some(t);
                    }
                    i += 17 + n;
                }
            }
            0xdb => {
                let (s, e) = p.segment()?;
                let mut i = s;
                while i < e {
                    let precision = bytes[i] >> 4;
                    let slot = (bytes[i] & 15) as usize;
                    let width = if precision == 0 { 1 } else { 2 };
                    if precision > 1 || slot > 3 || i + 1 + 64 * width > e {
                        return Err(Error::jpeg(i, "bad quantization table"));
                    }
                    for k in 0..64 {
                        let o = i + 1 + k * width;
                        let v = if width == 1 {
                            bytes[o] as u16
                        } else {
                            u16::from_be_bytes([bytes[o], bytes[o + 1]])
                        };
                        if v == 0 {
                            return Err(Error::jpeg(o, "zero quantizer"));
                        }
                        tables[slot][ZIGZAG[k]] = v;
                    }
                    defined[slot] = true;
                    i += 1 + 64 * width;
                }
            }
            0xdd => {
                let (s, e) = p.segment()?;
                if e - s < 2 {
                    return Err(Error::jpeg(s, "short restart interval segment"));
                }
                restart_interval = u16::from_be_bytes([bytes[s], bytes[s + 1]]) as usize;
            }
            0xda => {
                let (s, e) = p.segment()?;
                let f = frame
                    .as_mut()
                    .ok_or_else(|| Error::jpeg(at, "scan before frame header"))?;
                let scan = parse_sos(&bytes[s..e], s, f)?;
                for &(ci, dc, ac) in &scan {
                    let t = f.components[ci].table;
                    if !defined[t] {
                        return Err(Error::jpeg(
                            s,
                            format!("quantization table {t} is not defined"),
                        ));
                    }
                    if dc_tables[dc].is_none() || ac_tables[ac].is_none() {
                        return Err(Error::jpeg(s, "scan references an undefined Huffman table"));
                    }
                }
                let dcs: Vec<&HuffTable> = scan
                    .iter()
                    .map(|s| dc_tables[s.1].as_ref().unwrap())
                    .collect();
                let acs: Vec<&HuffTable> = scan
                    .iter()
                    .map(|s| ac_tables[s.2].as_ref().unwrap())
                    .collect();
                p.pos = decode_scan(bytes, e, f, &scan, &dcs, &acs, restart_interval)?;
                scanned = true;
            }
            0xd0..=0xd7 => return Err(Error::jpeg(at, "restart marker outside a scan")),
            0x01 => {}
            0xe0..=0xef | 0xfe | 0xdc | 0xde | 0xdf | 0xf0..=0xfd => {
                p.segment()?;
            }
            _ => return Err(Error::jpeg(at, format!("unexpected marker 0x{m:02x}"))),
        }
    }
    let mut frame = frame.ok_or_else(|| Error::jpeg(p.pos, "no frame header"))?;
    if !scanned {
        return Err(Error::jpeg(p.pos, "no scan data"));
    }
    frame.tables = tables;
    Ok(frame)
}

fn parse_sof(seg: &[u8], base: usize) -> Result<Frame> {
    if seg.len() < 6 {
        return Err(Error::jpeg(base, "short frame header"));
    }
    if seg[0] != 8 {
        return Err(Error::JpegUnsupported {
            offset: base,
            message: format!("{}-bit samples", seg[0]),
        });
    }
    let height = u16::from_be_bytes([seg[1], seg[2]]) as usize;
    let width = u16::from_be_bytes([seg[3], seg[4]]) as usize;
    let n = seg[5] as usize;
    if width == 0 || height == 0 {
        return Err(Error::JpegUnsupported {
            offset: base,
            message: "zero or deferred image dimensions".into(),
        });
    }
    if !(n == 1 || n == 3) || seg.len() < 6 + 3 * n {
        return Err(Error::JpegUnsupported {
            offset: base + 5,
            message: format!("{n} colour components"),
        });
    }
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let o = 6 + 3 * i;
        let (h, v) = ((seg[o + 1] >> 4) as usize, (seg[o + 1] & 15) as usize);
        if !(1..=4).contains(&h) || !(1..=4).contains(&v) || seg[o + 2] > 3 {
            return Err(Error::jpeg(
                base + o,
                "bad component sampling factors or table",
            ));
        }
        components.push(Component {
            id: seg[o],
            h,
            v,
            table: seg[o + 2] as usize,
            blocks_w: 0,
            blocks_h: 0,
            coeffs: Vec::new(),
        });
    }
    let mut frame = Frame {
        width,
        height,
        components,
        tables: [[0; 64]; 4],
    };
    let (hmax, vmax) = (frame.h_max(), frame.v_max());
    if frame
        .components
        .iter()
        .any(|c| hmax % c.h != 0 || vmax % c.v != 0)
    {
        return Err(Error::JpegUnsupported {
            offset: base,
            message: "non-integer chroma sampling ratios".into(),
        });
    }
    let (mx, my) = frame.mcus();
    for c in &mut frame.components {
        c.blocks_w = mx * c.h;
        c.blocks_h = my * c.v;
        c.coeffs = vec![0.0; c.blocks_w * c.blocks_h * 64];
    }
    Ok(frame)
}

/// Returns `(component index, dc table, ac table)` per scan component.
fn parse_sos(seg: &[u8], base: usize, frame: &Frame) -> Result<Vec<(usize, usize, usize)>> {
    let n = *seg
        .first()
        .ok_or_else(|| Error::jpeg(base, "empty scan header"))? as usize;
    if n == 0 || n > 4 || seg.len() != 1 + 2 * n + 3 {
        return Err(Error::jpeg(base, "bad scan header length"));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let id = seg[1 + 2 * i];
        let ci = frame
            .components
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| {
                Error::jpeg(
                    base + 1 + 2 * i,
                    format!("scan names unknown component {id}"),
                )
            })?;
        let t = seg[2 + 2 * i];
        let (dc, ac) = ((t >> 4) as usize, (t & 15) as usize);
        if dc > 3 || ac > 3 {
            return Err(Error::jpeg(base + 2 + 2 * i, "bad Huffman table selector"));
        }
        out.push((ci, dc, ac));
    }
    let s = &seg[1 + 2 * n..];
    if s[0] != 0 || s[1] != 63 || s[2] != 0 {
        return Err(Error::JpegUnsupported {
            offset: base + 1 + 2 * n,
            message: "spectral selection or successive approximation".into(),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn decode_scan(
    bytes: &[u8],
    start: usize,
    frame: &mut Frame,
    scan: &[(usize, usize, usize)],
    dcs: &[&HuffTable],
    acs: &[&HuffTable],
    restart_interval: usize,
) -> Result<usize> {
    let mut r = BitReader::new(bytes, start);
    let mut pred = vec![0i32; scan.len()];
    let (hmax, vmax) = (frame.h_max(), frame.v_max());
    // A single-component scan is not interleaved: its MCU is one block and
    // it covers only the blocks the component's own size needs.
    let units: Vec<(usize, usize, usize)> = if scan.len() == 1 {
        let c = &frame.components[scan[0].0];
        let cw = (frame.width * c.h).div_ceil(hmax);
        let ch = (frame.height * c.v).div_ceil(vmax);
        let (bw, bh) = (cw.div_ceil(8), ch.div_ceil(8));
        (0..bh)
            .flat_map(|by| (0..bw).map(move |bx| (0, bx, by)))
            .collect()
    } else {
        let (mx, my) = frame.mcus();
        let mut u = Vec::new();
        for my_ in 0..my {
            for mx_ in 0..mx {
                for (si, &(ci, _, _)) in scan.iter().enumerate() {
                    let c = &frame.components[ci];
                    for v in 0..c.v {
                        for h in 0..c.h {
                            u.push((si, mx_ * c.h + h, my_ * c.v + v));
                        }
                    }
                }
            }
        }
        u
    };
    let per_mcu = if scan.len() == 1 {
        1
    } else {
        scan.iter()
            .map(|s| frame.components[s.0].h * frame.components[s.0].v)
            .sum()
    };
    let mut rst = 0u8;
    for (k, &(si, bx, by)) in units.iter().enumerate() {
        let mcu = k / per_mcu;
        if restart_interval > 0 && mcu > 0 && mcu % restart_interval == 0 && k % per_mcu == 0 {
            r.restart(rst)?;
            rst = (rst + 1) % 8;
            pred.iter_mut().for_each(|p| *p = 0);
        }
        let block = frame.components[scan[si].0].block_mut(bx, by);
        let s = r.decode(dcs[si])?;
        if s > 11 {
            return Err(Error::jpeg(r.pos, format!("DC magnitude category {s}")));
        }
        pred[si] += r.receive_extend(s)?;
        block[0] = pred[si] as f64;
        let mut z = 1;
        while z < 64 {
            let rs = r.decode(acs[si])?;
            let (run, size) = ((rs >> 4) as usize, rs & 15);
            if size == 0 {
                if run == 15 {
                    z += 16;
                    continue;
                }
                break;
            }
            z += run;
            if z > 63 {
                return Err(Error::jpeg(r.pos, "AC run past the end of the block"));
            }
            block[ZIGZAG[z]] = r.receive_extend(size)? as f64;
            z += 1;
        }
    }
    Ok(r.end())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_garbage_with_offset() {
        match decode_frame(&[0xff, 0xd8, 0x12]) {
            Err(Error::Jpeg { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_frame(b"GIF89a"),
            Err(Error::Jpeg { offset: 0, .. })
        ));
    }

    #[test]
    fn rejects_progressive() {
        let bytes = [0xff, 0xd8, 0xff, 0xc2, 0x00, 0x02];
        assert!(matches!(
            decode_frame(&bytes),
            Err(Error::JpegUnsupported { .. })
        ));
    }
}
