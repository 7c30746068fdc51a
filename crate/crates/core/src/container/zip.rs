//! Read-only ZIP reader: central directory listing and capped entry reads.
//!
//! Only what a scanner needs. Entries are located through the central
//! directory, names are never used to touch the filesystem, and inflation is
//! bounded by a caller-supplied cap.

use std::io::{self, Read, Seek, SeekFrom};

use flate2::read::DeflateDecoder;

use super::FormatError;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const ZIP64_EOCD_SIG: u32 = 0x0606_4b50;
const ZIP64_LOCATOR_SIG: u32 = 0x0706_4b50;
const EOCD_LEN: u64 = 22;
const MAX_COMMENT: u64 = u16::MAX as u64;
const MAX_CENTRAL_DIRECTORY: u64 = 256 * 1024 * 1024;

pub const DEFAULT_ENTRY_CAP: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionMethod {
    Stored,
    Deflate,
    Other(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub path: String,
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    pub method: CompressionMethod,
    /// Offset of the entry's local header.
    pub offset: u64,
    pub crc32: u32,
    pub encrypted: bool,
}

impl ArchiveEntry {
    /// True for names with `..` segments, absolute roots or drive prefixes.
    pub fn is_path_traversal(&self) -> bool {
        let p = self.path.as_str();
        if p.starts_with('/') || p.starts_with('\\') {
            return true;
        }
        let b = p.as_bytes();
        if b.len() >= 2 && b[1] == b':' && b[0].is_ascii_alphabetic() {
            return true;
        }
        p.split(['/', '\\']).any(|seg| seg == "..")
    }

    pub fn is_supported(&self) -> bool {
        !self.encrypted && matches!(self.method, CompressionMethod::Stored | CompressionMethod::Deflate)
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit(['/', '\\']).next().unwrap_or(&self.path)
    }
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn le64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn read_at<R: Read + Seek>(file: &mut R, offset: u64, len: usize) -> io::Result<Vec<u8>> {
    file.seek(SeekFrom::Start(offset))?;
    let mut buf = vec![0; len];
    file.read_exact(&mut buf)?;
    Ok(buf)
}

fn corrupt(offset: u64) -> impl Fn(io::Error) -> FormatError {
    move |e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::CorruptHeader { offset },
        _ => FormatError::Io(e.to_string()),
    }
}

struct Directory {
    offset: u64,
    size: u64,
    entries: u64,
}

fn locate_directory<R: Read + Seek>(file: &mut R) -> Result<Directory, FormatError> {
    let len = file.seek(SeekFrom::End(0)).map_err(FormatError::from)?;
    if len < EOCD_LEN {
        return Err(FormatError::NoCentralDirectory);
    }
    let tail_len = len.min(EOCD_LEN + MAX_COMMENT + 20);
    let tail_start = len - tail_len;
    let tail = read_at(file, tail_start, tail_len as usize)?;

    // Prefer a record whose comment length runs exactly to end of file.
    let mut found = None;
    for i in (0..=tail.len() - EOCD_LEN as usize).rev() {
        if le32(&tail, i) != EOCD_SIG {
            continue;
        }
        let comment_len = le16(&tail, i + 20) as usize;
        if i + EOCD_LEN as usize + comment_len == tail.len() {
            found = Some(i);
            break;
        }
        found.get_or_insert(i);
    }
    let i = found.ok_or(FormatError::NoCentralDirectory)?;
    let eocd_pos = tail_start + i as u64;
    let rec = &tail[i..];
    let mut dir = Directory { entries: le16(rec, 10) as u64, size: le32(rec, 12) as u64, offset: le32(rec, 16) as u64 };
    let mut dir_end_limit = eocd_pos;

    let needs_zip64 = dir.entries == 0xffff || dir.size == 0xffff_ffff || dir.offset == 0xffff_ffff;
    if needs_zip64 && i >= 20 && le32(&tail, i - 20) == ZIP64_LOCATOR_SIG {
        let z64_pos = le64(&tail, i - 20 + 8);
        if z64_pos >= eocd_pos {
            return Err(FormatError::CorruptHeader { offset: eocd_pos - 20 });
        }
        let rec = read_at(file, z64_pos, 56).map_err(corrupt(z64_pos))?;
        if le32(&rec, 0) != ZIP64_EOCD_SIG {
            return Err(FormatError::CorruptHeader { offset: z64_pos });
        }
        dir = Directory { entries: le64(&rec, 32), size: le64(&rec, 40), offset: le64(&rec, 48) };
        dir_end_limit = z64_pos;
    }

    match dir.offset.checked_add(dir.size) {
        Some(end) if end <= dir_end_limit => {}
        _ => return Err(FormatError::CorruptHeader { offset: eocd_pos }),
    }
    if dir.size > MAX_CENTRAL_DIRECTORY {
        return Err(FormatError::CapExceeded { declared: dir.size, cap: MAX_CENTRAL_DIRECTORY });
    }
    Ok(dir)
}

/// List entries from the central directory, in directory order, without
/// decompressing anything.
pub fn list_entries<R: Read + Seek>(file: &mut R) -> Result<Vec<ArchiveEntry>, FormatError> {
    let dir = locate_directory(file)?;
    let cd = read_at(file, dir.offset, dir.size as usize).map_err(corrupt(dir.offset))?;
    let mut entries = Vec::new();
    let mut pos = 0usize;
    while (entries.len() as u64) < dir.entries {
        let at = dir.offset + pos as u64;
        if pos + 46 > cd.len() || le32(&cd, pos) != CENTRAL_HEADER_SIG {
            return Err(FormatError::CorruptHeader { offset: at });
        }
        let h = &cd[pos..];
        let flags = le16(h, 8);
        let method = match le16(h, 10) {
            0 => CompressionMethod::Stored,
            8 => CompressionMethod::Deflate,
            m => CompressionMethod::Other(m),
        };
        let crc32 = le32(h, 16);
        let mut compressed_size = le32(h, 20) as u64;
        let mut uncompressed_size = le32(h, 24) as u64;
        let name_len = le16(h, 28) as usize;
        let extra_len = le16(h, 30) as usize;
        let comment_len = le16(h, 32) as usize;
        let mut offset = le32(h, 42) as u64;
        let var_end = 46 + name_len + extra_len + comment_len;
        if pos + var_end > cd.len() {
            return Err(FormatError::CorruptHeader { offset: at });
        }
        let name = &h[46..46 + name_len];
        let extra = &h[46 + name_len..46 + name_len + extra_len];
        apply_zip64_extra(extra, &mut uncompressed_size, &mut compressed_size, &mut offset);
        if name.is_empty() {
            return Err(FormatError::CorruptHeader { offset: at });
        }
        entries.push(ArchiveEntry {
            path: String::from_utf8_lossy(name).into_owned(),
            compressed_size,
            uncompressed_size,
            method,
            offset,
            crc32,
            encrypted: flags & 1 != 0,
        });
        pos += var_end;
    }
    Ok(entries)
}

fn apply_zip64_extra(mut extra: &[u8], usize_: &mut u64, csize: &mut u64, offset: &mut u64) {
    while extra.len() >= 4 {
        let id = le16(extra, 0);
        let len = le16(extra, 2) as usize;
        let Some(body) = extra.get(4..4 + len) else { return };
        if id == 0x0001 {
            let mut cursor = 0;
            for field in [usize_, csize, offset] {
                if *field == 0xffff_ffff {
                    if cursor + 8 > body.len() {
                        return;
                    }
                    *field = le64(body, cursor);
                    cursor += 8;
                }
            }
            return;
        }
        extra = &extra[4 + len..];
    }
}

fn data_start<R: Read + Seek>(file: &mut R, entry: &ArchiveEntry) -> Result<u64, FormatError> {
    let header = read_at(file, entry.offset, 30).map_err(corrupt(entry.offset))?;
    if le32(&header, 0) != LOCAL_HEADER_SIG {
        return Err(FormatError::CorruptHeader { offset: entry.offset });
    }
    Ok(entry.offset + 30 + le16(&header, 26) as u64 + le16(&header, 28) as u64)
}

fn entry_reader<'a, R: Read + Seek>(file: &'a mut R, entry: &ArchiveEntry) -> Result<Box<dyn Read + 'a>, FormatError> {
    if !entry.is_supported() {
        return Err(FormatError::UnsupportedMethod { path: entry.path.clone() });
    }
    let start = data_start(file, entry)?;
    file.seek(SeekFrom::Start(start))?;
    let raw = file.take(entry.compressed_size);
    Ok(match entry.method {
        CompressionMethod::Stored => Box::new(raw),
        _ => Box::new(DeflateDecoder::new(raw)),
    })
}

/// Read an entry's full contents, refusing anything declared or inflating past `cap`.
pub fn read_entry<R: Read + Seek>(file: &mut R, entry: &ArchiveEntry, cap: u64) -> Result<Vec<u8>, FormatError> {
    if entry.uncompressed_size > cap {
        return Err(FormatError::CapExceeded { declared: entry.uncompressed_size, cap });
    }
    if entry.method == CompressionMethod::Stored && entry.compressed_size != entry.uncompressed_size {
        return Err(FormatError::SizeMismatch {
            path: entry.path.clone(),
            expected: entry.uncompressed_size,
            actual: entry.compressed_size,
        });
    }
    let path = entry.path.clone();
    let reader = entry_reader(file, entry)?;
    // One byte past the declared size reveals a lying header without reading further.
    let mut limited = reader.take(entry.uncompressed_size + 1);
    let mut out = Vec::with_capacity(entry.uncompressed_size.min(16 * 1024 * 1024) as usize);
    limited.read_to_end(&mut out).map_err(|e| match entry.method {
        CompressionMethod::Deflate => FormatError::InflateError { path: path.clone(), reason: e.to_string() },
        _ => FormatError::from(e),
    })?;
    if out.len() as u64 != entry.uncompressed_size {
        return Err(FormatError::SizeMismatch { path, expected: entry.uncompressed_size, actual: out.len() as u64 });
    }
    if crc32fast::hash(&out) != entry.crc32 {
        return Err(FormatError::ChecksumMismatch { path });
    }
    Ok(out)
}

/// First `n` bytes of an entry (fewer if the entry is shorter).
pub fn read_entry_prefix<R: Read + Seek>(file: &mut R, entry: &ArchiveEntry, n: usize) -> Result<Vec<u8>, FormatError> {
    let path = entry.path.clone();
    let mut out = Vec::with_capacity(n);
    entry_reader(file, entry)?
        .take(n as u64)
        .read_to_end(&mut out)
        .map_err(|e| FormatError::InflateError { path, reason: e.to_string() })?;
    Ok(out)
}

/// Entries a loader would deserialize as pickle, with their contents.
///
/// An entry qualifies by a `.pkl`/`.pickle` name or by content that starts
/// like a pickle stream, so renamed payloads are still found.
pub fn find_pickle_payloads<R: Read + Seek>(
    entries: &[ArchiveEntry],
    file: &mut R,
    cap: u64,
) -> Vec<(ArchiveEntry, Result<Vec<u8>, FormatError>)> {
    let mut hits = Vec::new();
    for entry in entries {
        if entry.path.ends_with('/') && entry.uncompressed_size == 0 {
            continue;
        }
        let by_name = entry.path.ends_with(".pkl") || entry.path.ends_with(".pickle");
        let selected = by_name
            || matches!(read_entry_prefix(file, entry, crate::pickle::sniff::SNIFF_WINDOW),
                        Ok(prefix) if crate::pickle::sniff::looks_like_pickle(&prefix));
        if selected {
            hits.push((entry.clone(), read_entry(file, entry, cap)));
        }
    }
    hits
}

/// Minimal ZIP writer used by the fixture generator and tests.
///
/// Stored entries only. [`ZipWriter::add_stored`] writes sizes inline;
/// [`ZipWriter::start_stored`] streams data and finishes with a data
/// descriptor, which keeps memory flat for large entries.
pub struct ZipWriter<W: io::Write> {
    out: W,
    written: u64,
    central: Vec<u8>,
    count: u64,
    open: Option<OpenEntry>,
}

struct OpenEntry {
    name: Vec<u8>,
    offset: u64,
    crc: crc32fast::Hasher,
    size: u64,
}

impl<W: io::Write> ZipWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, written: 0, central: Vec::new(), count: 0, open: None }
    }

    fn put(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.out.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    fn local_header(&mut self, name: &[u8], flags: u16, crc: u32, size: u32) -> io::Result<()> {
        let mut h = Vec::with_capacity(30 + name.len());
        h.extend_from_slice(&LOCAL_HEADER_SIG.to_le_bytes());
        h.extend_from_slice(&20u16.to_le_bytes());
        h.extend_from_slice(&flags.to_le_bytes());
        h.extend_from_slice(&0u16.to_le_bytes()); // stored
        h.extend_from_slice(&[0, 0, 0x21, 0]); // 1980-01-01 00:00
        h.extend_from_slice(&crc.to_le_bytes());
        h.extend_from_slice(&size.to_le_bytes());
        h.extend_from_slice(&size.to_le_bytes());
        h.extend_from_slice(&(name.len() as u16).to_le_bytes());
        h.extend_from_slice(&0u16.to_le_bytes());
        h.extend_from_slice(name);
        self.put(&h)
    }

    fn central_record(&mut self, name: &[u8], flags: u16, crc: u32, size: u64, offset: u64) {
        let c = &mut self.central;
        c.extend_from_slice(&CENTRAL_HEADER_SIG.to_le_bytes());
        c.extend_from_slice(&20u16.to_le_bytes());
        c.extend_from_slice(&20u16.to_le_bytes());
        c.extend_from_slice(&flags.to_le_bytes());
        c.extend_from_slice(&0u16.to_le_bytes());
        c.extend_from_slice(&[0, 0, 0x21, 0]);
        c.extend_from_slice(&crc.to_le_bytes());
        c.extend_from_slice(&(size as u32).to_le_bytes());
        c.extend_from_slice(&(size as u32).to_le_bytes());
        c.extend_from_slice(&(name.len() as u16).to_le_bytes());
        c.extend_from_slice(&[0; 8]); // extra, comment, disk, internal attrs
        c.extend_from_slice(&0u32.to_le_bytes());
        c.extend_from_slice(&(offset as u32).to_le_bytes());
        c.extend_from_slice(name);
        self.count += 1;
    }

    pub fn add_stored(&mut self, name: &str, data: &[u8]) -> io::Result<()> {
        assert!(self.open.is_none(), "finish the streamed entry first");
        let offset = self.written;
        let crc = crc32fast::hash(data);
        self.local_header(name.as_bytes(), 0x0800, crc, data.len() as u32)?;
        self.put(data)?;
        self.central_record(name.as_bytes(), 0x0800, crc, data.len() as u64, offset);
        Ok(())
    }

    pub fn start_stored(&mut self, name: &str) -> io::Result<()> {
        assert!(self.open.is_none(), "finish the streamed entry first");
        let offset = self.written;
        self.local_header(name.as_bytes(), 0x0808, 0, 0)?;
        self.open = Some(OpenEntry { name: name.as_bytes().to_vec(), offset, crc: crc32fast::Hasher::new(), size: 0 });
        Ok(())
    }

    pub fn write_data(&mut self, data: &[u8]) -> io::Result<()> {
        let entry = self.open.as_mut().expect("no streamed entry open");
        entry.crc.update(data);
        entry.size += data.len() as u64;
        self.put(data)
    }

    pub fn finish_stored(&mut self) -> io::Result<()> {
        let entry = self.open.take().expect("no streamed entry open");
        assert!(entry.size < u32::MAX as u64, "zip64 output is not supported");
        let crc = entry.crc.finalize();
        let mut d = Vec::with_capacity(16);
        d.extend_from_slice(&0x0807_4b50u32.to_le_bytes());
        d.extend_from_slice(&crc.to_le_bytes());
        d.extend_from_slice(&(entry.size as u32).to_le_bytes());
        d.extend_from_slice(&(entry.size as u32).to_le_bytes());
        self.put(&d)?;
        self.central_record(&entry.name, 0x0808, crc, entry.size, entry.offset);
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        assert!(self.open.is_none(), "finish the streamed entry first");
        let cd_offset = self.written;
        let central = std::mem::take(&mut self.central);
        self.put(&central)?;
        let mut e = Vec::with_capacity(22);
        e.extend_from_slice(&EOCD_SIG.to_le_bytes());
        e.extend_from_slice(&[0; 4]);
        e.extend_from_slice(&(self.count as u16).to_le_bytes());
        e.extend_from_slice(&(self.count as u16).to_le_bytes());
        e.extend_from_slice(&(central.len() as u32).to_le_bytes());
        e.extend_from_slice(&(cd_offset as u32).to_le_bytes());
        e.extend_from_slice(&0u16.to_le_bytes());
        self.put(&e)?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Cursor, Write};

    fn archive(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let mut w = ZipWriter::new(Vec::new());
        for (name, data) in entries {
            w.add_stored(name, data).unwrap();
        }
        w.finish().unwrap()
    }

    /// Archive with one deflated entry, assembled by hand.
    fn deflated(name: &str, data: &[u8], declared: Option<u32>) -> Vec<u8> {
        let mut enc = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(data).unwrap();
        let comp = enc.finish().unwrap();
        let size = declared.unwrap_or(data.len() as u32);
        let crc = crc32fast::hash(data);
        let mut out = Vec::new();
        out.extend_from_slice(&LOCAL_HEADER_SIG.to_le_bytes());
        out.extend_from_slice(&[20, 0, 0, 0, 8, 0, 0, 0, 0x21, 0]);
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(comp.len() as u32).to_le_bytes());
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&comp);
        let cd = out.len();
        out.extend_from_slice(&CENTRAL_HEADER_SIG.to_le_bytes());
        out.extend_from_slice(&[20, 0, 20, 0, 0, 0, 8, 0, 0, 0, 0x21, 0]);
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(comp.len() as u32).to_le_bytes());
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&[0; 12]);
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let cd_len = out.len() - cd;
        out.extend_from_slice(&EOCD_SIG.to_le_bytes());
        out.extend_from_slice(&[0, 0, 0, 0, 1, 0, 1, 0]);
        out.extend_from_slice(&(cd_len as u32).to_le_bytes());
        out.extend_from_slice(&(cd as u32).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out
    }

    #[test]
    fn empty_archive() {
        let bytes = archive(&[]);
        assert_eq!(bytes.len(), 22);
        assert_eq!(list_entries(&mut Cursor::new(bytes)).unwrap(), []);
    }

    #[test]
    fn random_bytes_have_no_directory() {
        let bytes = [7u8, 1, 2, 3, 4, 5, 6, 7, 8, 9];
        assert_eq!(list_entries(&mut Cursor::new(&bytes[..])), Err(FormatError::NoCentralDirectory));
        assert_eq!(list_entries(&mut Cursor::new(vec![0u8; 100])), Err(FormatError::NoCentralDirectory));
    }

    #[test]
    fn stored_roundtrip() {
        let bytes = archive(&[("a/hello.txt", b"hello"), ("b", b"")]);
        let mut cur = Cursor::new(bytes);
        let entries = list_entries(&mut cur).unwrap();
        assert_eq!(entries.iter().map(|e| e.path.as_str()).collect::<Vec<_>>(), ["a/hello.txt", "b"]);
        assert_eq!(entries[0].method, CompressionMethod::Stored);
        assert_eq!(read_entry(&mut cur, &entries[0], DEFAULT_ENTRY_CAP).unwrap(), b"hello");
        assert_eq!(read_entry_prefix(&mut cur, &entries[0], 2).unwrap(), b"he");
        assert_eq!(entries[0].file_name(), "hello.txt");
    }

    #[test]
    fn streamed_entry_uses_descriptor() {
        let mut w = ZipWriter::new(Vec::new());
        w.start_stored("big").unwrap();
        for _ in 0..4 {
            w.write_data(&[1u8; 1000]).unwrap();
        }
        w.finish_stored().unwrap();
        w.add_stored("after", b"x").unwrap();
        let mut cur = Cursor::new(w.finish().unwrap());
        let entries = list_entries(&mut cur).unwrap();
        assert_eq!(entries[0].uncompressed_size, 4000);
        assert_eq!(read_entry(&mut cur, &entries[0], DEFAULT_ENTRY_CAP).unwrap(), vec![1u8; 4000]);
        assert_eq!(read_entry(&mut cur, &entries[1], DEFAULT_ENTRY_CAP).unwrap(), b"x");
    }

    #[test]
    fn deflate_entries() {
        let data = b"abcabcabcabcabcabcabcabc".repeat(10);
        let mut cur = Cursor::new(deflated("x.pkl", &data, None));
        let entries = list_entries(&mut cur).unwrap();
        assert_eq!(entries[0].method, CompressionMethod::Deflate);
        assert_eq!(read_entry(&mut cur, &entries[0], DEFAULT_ENTRY_CAP).unwrap(), data);
    }

    #[test]
    fn cap_rejects_declared_bombs() {
        let mut cur = Cursor::new(deflated("bomb", b"tiny", Some(1 << 30)));
        let entries = list_entries(&mut cur).unwrap();
        assert_eq!(
            read_entry(&mut cur, &entries[0], DEFAULT_ENTRY_CAP),
            Err(FormatError::CapExceeded { declared: 1 << 30, cap: DEFAULT_ENTRY_CAP })
        );
    }

    #[test]
    fn lying_sizes_detected() {
        // declares 2 bytes but inflates to far more; reading stops at 3
        let mut cur = Cursor::new(deflated("liar", &[0u8; 100_000], Some(2)));
        let entries = list_entries(&mut cur).unwrap();
        assert!(matches!(read_entry(&mut cur, &entries[0], 1024), Err(FormatError::SizeMismatch { actual: 3, .. })));
    }

    #[test]
    fn traversal_names_flagged() {
        let bytes = archive(&[("../evil.pkl", b"N."), ("/abs", b""), ("ok/fine", b""), ("C:\\x", b"")]);
        let entries = list_entries(&mut Cursor::new(bytes)).unwrap();
        let flags: Vec<bool> = entries.iter().map(ArchiveEntry::is_path_traversal).collect();
        assert_eq!(flags, [true, true, false, true]);
    }

    #[test]
    fn unsupported_methods_reported() {
        let mut bytes = archive(&[("enc.pkl", b"N.")]);
        // set the encryption flag in the central record
        let cd = bytes.windows(4).position(|w| w == CENTRAL_HEADER_SIG.to_le_bytes()).unwrap();
        bytes[cd + 8] |= 1;
        let mut cur = Cursor::new(bytes);
        let entries = list_entries(&mut cur).unwrap();
        assert!(entries[0].encrypted);
        assert_eq!(
            read_entry(&mut cur, &entries[0], DEFAULT_ENTRY_CAP),
            Err(FormatError::UnsupportedMethod { path: "enc.pkl".into() })
        );
    }

    #[test]
    fn pickle_payloads_found_by_name_and_content() {
        let bytes = archive(&[
            ("model/data.pkl", b"\x80\x02N."),
            ("config.json", b"{}"),
            ("weights.bin", b"\x80\x04N."),
            ("model/data/0", &[0u8; 16]),
        ]);
        let mut cur = Cursor::new(bytes);
        let entries = list_entries(&mut cur).unwrap();
        let hits = find_pickle_payloads(&entries, &mut cur, DEFAULT_ENTRY_CAP);
        let names: Vec<&str> = hits.iter().map(|(e, _)| e.path.as_str()).collect();
        assert_eq!(names, ["model/data.pkl", "weights.bin"]);
        assert_eq!(hits[1].1.as_deref().unwrap(), b"\x80\x04N.");

        let only_config = archive(&[("config.json", b"{}")]);
        let mut cur = Cursor::new(only_config);
        let entries = list_entries(&mut cur).unwrap();
        assert!(find_pickle_payloads(&entries, &mut cur, DEFAULT_ENTRY_CAP).is_empty());
    }

    #[test]
    fn truncated_directory_is_corrupt() {
        let mut bytes = archive(&[("a", b"1")]);
        let n = bytes.len();
        // point the directory offset past its real location
        bytes[n - 6] = bytes[n - 6].wrapping_add(5);
        assert!(matches!(list_entries(&mut Cursor::new(bytes)), Err(FormatError::CorruptHeader { .. })));
    }
}
