//! Column codecs for the segment format.
//!
//! Every decoder takes the expected element count and validates the block
//! fully: lengths must add up, runs must cover exactly the element count,
//! dictionary codes must be in range. All integers are little endian.

/// Why a block failed to decode. Callers wrap this with column context.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct CodecError(pub String);

fn err<T>(why: impl Into<String>) -> Result<T, CodecError> {
    Err(CodecError(why.into()))
}

pub(crate) struct Reader<'a> {
    block: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(block: &'a [u8]) -> Self {
        Reader { block, pos: 0 }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.block.len() - self.pos < n {
            return err("truncated block");
        }
        let out = &self.block[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub(crate) fn str(&mut self, n: usize) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.bytes(n)?).map_err(|_| CodecError("invalid utf-8".into()))
    }

    pub(crate) fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.block.len() {
            return err("trailing bytes");
        }
        Ok(())
    }
}

pub fn encode_i64_plain(values: &[i64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_i64_plain(block: &[u8], count: usize) -> Result<Vec<i64>, CodecError> {
    if block.len() != count * 8 {
        return err(format!("expected {} bytes, got {}", count * 8, block.len()));
    }
    Ok(block
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Fixed-stride selective read; `ordinals` must be in range.
pub fn decode_i64_plain_rows(
    block: &[u8],
    count: usize,
    ordinals: &[u32],
) -> Result<Vec<i64>, CodecError> {
    if block.len() != count * 8 {
        return err("bad block size");
    }
    let mut out = Vec::with_capacity(ordinals.len());
    for &o in ordinals {
        let at = o as usize * 8;
        if at + 8 > block.len() {
            return err(format!("ordinal {o} out of range"));
        }
        out.push(i64::from_le_bytes(block[at..at + 8].try_into().unwrap()));
    }
    Ok(out)
}

pub fn encode_u32_plain(values: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_u32_plain(block: &[u8], count: usize) -> Result<Vec<u32>, CodecError> {
    if block.len() != count * 4 {
        return err(format!("expected {} bytes, got {}", count * 4, block.len()));
    }
    Ok(block
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Values as `u32` length plus UTF-8 bytes, back to back.
pub fn encode_str_plain<S: AsRef<str>>(values: &[S]) -> Vec<u8> {
    let total: usize = values.iter().map(|v| 4 + v.as_ref().len()).sum();
    let mut out = Vec::with_capacity(total);
    for v in values {
        let v = v.as_ref();
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v.as_bytes());
    }
    out
}

pub fn decode_str_plain(block: &[u8], count: usize) -> Result<Vec<String>, CodecError> {
    let mut r = Reader::new(block);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        out.push(r.str(len)?.to_string());
    }
    r.finish()?;
    Ok(out)
}

/// Walks length headers, copying only the requested ordinals; `ordinals`
/// must be sorted ascending.
pub fn decode_str_plain_rows(
    block: &[u8],
    count: usize,
    ordinals: &[u32],
) -> Result<Vec<String>, CodecError> {
    debug_assert!(ordinals.windows(2).all(|w| w[0] < w[1]));
    let mut r = Reader::new(block);
    let mut out = Vec::with_capacity(ordinals.len());
    let mut want = ordinals.iter().peekable();
    for row in 0..count {
        let len = r.u32()? as usize;
        if want.peek().is_some_and(|&&o| o as usize == row) {
            out.push(r.str(len)?.to_string());
            want.next();
        } else {
            r.bytes(len)?;
        }
    }
    if let Some(&&o) = want.peek() {
        return err(format!("ordinal {o} out of range"));
    }
    r.finish()?;
    Ok(out)
}

/// Zero-copy view over a plain string block, for scan paths that should not
/// materialize row values.
pub struct StrPlainBlock<'a> {
    block: &'a [u8],
    count: u32,
}

impl<'a> StrPlainBlock<'a> {
    pub fn new(block: &'a [u8], count: u32) -> Result<Self, CodecError> {
        // Validate structure once so iteration can be unchecked.
        let mut r = Reader::new(block);
        for _ in 0..count {
            let len = r.u32()? as usize;
            r.bytes(len)?;
        }
        r.finish()?;
        Ok(StrPlainBlock { block, count })
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [u8]> + '_ {
        let mut pos = 0usize;
        (0..self.count).map(move |_| {
            let len =
                u32::from_le_bytes(self.block[pos..pos + 4].try_into().unwrap()) as usize;
            let value = &self.block[pos + 4..pos + 4 + len];
            pos += 4 + len;
            value
        })
    }

    /// Appends the ordinals of rows whose value contains the finder's
    /// needle. One block-level SIMD search, then each hit is mapped to its
    /// row and checked to lie inside the row's value bytes, which discards
    /// hits that only exist across length headers.
    pub fn rows_containing(&self, finder: &memchr::memmem::Finder, out: &mut Vec<u32>) {
        if finder.needle().is_empty() {
            out.extend(0..self.count);
            return;
        }
        let mut row = 0u32;
        let mut value_start = 4usize;
        let mut value_end = value_start
            + if self.count > 0 {
                u32::from_le_bytes(self.block[0..4].try_into().unwrap()) as usize
            } else {
                0
            };
        let mut last_pushed = u32::MAX;
        for hit in finder.find_iter(self.block) {
            let end = hit + finder.needle().len();
            // Advance the row window until the hit could fit inside it.
            while row < self.count && end > value_end {
                row += 1;
                if row == self.count {
                    return;
                }
                value_start = value_end + 4;
                let len = u32::from_le_bytes(
                    self.block[value_end..value_end + 4].try_into().unwrap(),
                ) as usize;
                value_end = value_start + len;
            }
            if row == self.count {
                return;
            }
            if hit >= value_start && last_pushed != row {
                out.push(row);
                last_pushed = row;
            }
        }
    }
}

/// Dictionary encoding: first-appearance dictionary, then fixed-width codes.
pub fn encode_str_dict<S: AsRef<str>>(values: &[S]) -> Vec<u8> {
    let mut dict: Vec<&str> = Vec::new();
    let mut index: std::collections::HashMap<&str, u32> = std::collections::HashMap::new();
    let mut codes: Vec<u32> = Vec::with_capacity(values.len());
    for v in values {
        let v = v.as_ref();
        let code = *index.entry(v).or_insert_with(|| {
            dict.push(v);
            dict.len() as u32 - 1
        });
        codes.push(code);
    }
    let width: u8 = if dict.len() <= 1 << 8 {
        1
    } else if dict.len() <= 1 << 16 {
        2
    } else {
        4
    };
    let mut out = Vec::new();
    out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
    for entry in &dict {
        out.extend_from_slice(&(entry.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.as_bytes());
    }
    out.push(width);
    for code in codes {
        out.extend_from_slice(&code.to_le_bytes()[..width as usize]);
    }
    out
}

pub fn decode_str_dict(block: &[u8], count: usize) -> Result<Vec<String>, CodecError> {
    let mut r = Reader::new(block);
    let dict_len = r.u32()? as usize;
    let mut dict = Vec::with_capacity(dict_len);
    for _ in 0..dict_len {
        let len = r.u32()? as usize;
        dict.push(r.str(len)?.to_string());
    }
    let width = r.u8()? as usize;
    if !matches!(width, 1 | 2 | 4) {
        return err(format!("bad code width {width}"));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let raw = r.bytes(width)?;
        let mut code = [0u8; 4];
        code[..width].copy_from_slice(raw);
        let code = u32::from_le_bytes(code) as usize;
        let entry = dict.get(code).ok_or_else(|| {
            CodecError(format!("code {code} outside dictionary of {dict_len}"))
        })?;
        out.push(entry.clone());
    }
    r.finish()?;
    Ok(out)
}

/// Run-length encoding for string columns: `(run_len, value)` pairs.
pub fn encode_str_rle<S: AsRef<str>>(values: &[S]) -> Vec<u8> {
    let mut runs: Vec<(u32, &str)> = Vec::new();
    for v in values {
        let v = v.as_ref();
        match runs.last_mut() {
            Some((len, prev)) if *prev == v => *len += 1,
            _ => runs.push((1, v)),
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for (len, value) in runs {
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&(value.len() as u32).to_le_bytes());
        out.extend_from_slice(value.as_bytes());
    }
    out
}

pub fn decode_str_rle(block: &[u8], count: usize) -> Result<Vec<String>, CodecError> {
    let runs = decode_str_rle_runs(block, count)?;
    let mut out = Vec::with_capacity(count);
    for (len, value) in runs {
        out.extend(std::iter::repeat_n(value, len as usize));
    }
    Ok(out)
}

/// Runs without expansion; validates that they cover `count` elements.
pub fn decode_str_rle_runs(block: &[u8], count: usize) -> Result<Vec<(u32, String)>, CodecError> {
    let mut r = Reader::new(block);
    let run_count = r.u32()? as usize;
    let mut runs = Vec::with_capacity(run_count);
    let mut covered = 0u64;
    for _ in 0..run_count {
        let len = r.u32()?;
        if len == 0 {
            return err("empty run");
        }
        let bytes = r.u32()? as usize;
        runs.push((len, r.str(bytes)?.to_string()));
        covered += len as u64;
    }
    r.finish()?;
    if covered != count as u64 {
        return err(format!("runs cover {covered} elements, expected {count}"));
    }
    Ok(runs)
}

/// Run-length encoding for u32 columns: `(run_len, value)` pairs.
pub fn encode_u32_rle(values: &[u32]) -> Vec<u8> {
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for &v in values {
        match runs.last_mut() {
            Some((len, prev)) if *prev == v => *len += 1,
            _ => runs.push((1, v)),
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for (len, value) in runs {
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

pub fn decode_u32_rle(block: &[u8], count: usize) -> Result<Vec<u32>, CodecError> {
    let mut r = Reader::new(block);
    let run_count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    let mut covered = 0u64;
    for _ in 0..run_count {
        let len = r.u32()?;
        if len == 0 {
            return err("empty run");
        }
        let value = r.u32()?;
        out.extend(std::iter::repeat_n(value, len as usize));
        covered += len as u64;
    }
    r.finish()?;
    if covered != count as u64 {
        return err(format!("runs cover {covered} elements, expected {count}"));
    }
    Ok(out)
}

/// Boolean run-length encoding: the first value, then alternating run
/// lengths.
pub fn encode_bool_rle(values: &[bool]) -> Vec<u8> {
    let first = values.first().copied().unwrap_or(false);
    let mut runs: Vec<u32> = Vec::new();
    let mut current = first;
    let mut len = 0u32;
    for &v in values {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    if len > 0 {
        runs.push(len);
    }
    let mut out = Vec::new();
    out.push(first as u8);
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for run in runs {
        out.extend_from_slice(&run.to_le_bytes());
    }
    out
}

/// Alternating runs, starting at the returned first value.
pub fn decode_bool_rle_runs(block: &[u8], count: usize) -> Result<(bool, Vec<u32>), CodecError> {
    let mut r = Reader::new(block);
    let first = match r.u8()? {
        0 => false,
        1 => true,
        b => return err(format!("bad bool byte {b}")),
    };
    let run_count = r.u32()? as usize;
    let mut runs = Vec::with_capacity(run_count);
    let mut covered = 0u64;
    for _ in 0..run_count {
        let len = r.u32()?;
        if len == 0 {
            return err("empty run");
        }
        covered += len as u64;
        runs.push(len);
    }
    r.finish()?;
    if covered != count as u64 {
        return err(format!("runs cover {covered} elements, expected {count}"));
    }
    Ok((first, runs))
}

pub fn decode_bool_rle(block: &[u8], count: usize) -> Result<Vec<bool>, CodecError> {
    let (first, runs) = decode_bool_rle_runs(block, count)?;
    let mut out = Vec::with_capacity(count);
    let mut value = first;
    for run in runs {
        out.extend(std::iter::repeat_n(value, run as usize));
        value = !value;
    }
    Ok(out)
}
