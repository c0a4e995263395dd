use std::io::{self, Read};

use super::*;

/// Which side produced a message. Status replies reuse the request id, so the
/// decoder has to know whether it is reading requests or responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Request,
    Response,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<'a> {
    pub commands: Vec<Command>,
    /// Bytes after the first frame, if any.
    pub remainder: &'a [u8],
}

const MAX_COMPOUND_DEPTH: usize = 16;

pub fn encode_message(commands: &[Command]) -> Result<Vec<u8>, WireError> {
    let mut out = vec![0u8; 4];
    for command in commands {
        let mut payload = Vec::new();
        encode_payload(command, &mut payload);
        let short_len = payload.len() + 2;
        if short_len <= 255 {
            out.push(short_len as u8);
        } else {
            let long_len = payload.len() + 6;
            if long_len > MAX_FRAME_LEN {
                return Err(WireError::OversizeMessage(long_len));
            }
            out.push(0);
            out.extend_from_slice(&(long_len as u32).to_be_bytes());
        }
        out.push(command.id());
        out.extend_from_slice(&payload);
        if out.len() > MAX_FRAME_LEN {
            return Err(WireError::OversizeMessage(out.len()));
        }
    }
    let total = out.len() as u32;
    out[..4].copy_from_slice(&total.to_be_bytes());
    Ok(out)
}

fn encode_payload(command: &Command, out: &mut Vec<u8>) {
    match command {
        Command::SetOrder(order) => out.extend_from_slice(&order.to_be_bytes()),
        Command::SimStep(target) => out.extend_from_slice(&target.to_be_bytes()),
        Command::GetVehicle(q) | Command::GetTls(q) => {
            out.push(q.variable);
            put_string(out, &q.object);
        }
        Command::SetVehicle(v)
        | Command::SetTls(v)
        | Command::VehicleValue(v)
        | Command::TlsValue(v) => {
            out.push(v.variable);
            put_string(out, &v.object);
            put_typed(out, &v.value);
        }
        Command::Close => {}
        Command::Status(s) => {
            out.push(s.code);
            put_string(out, &s.description);
        }
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_typed(out: &mut Vec<u8>, value: &TypedValue) {
    out.push(value.tag());
    match value {
        TypedValue::UByte(b) => out.push(*b),
        TypedValue::Int(i) => out.extend_from_slice(&i.to_be_bytes()),
        TypedValue::Double(d) => out.extend_from_slice(&d.to_be_bytes()),
        TypedValue::String(s) => put_string(out, s),
        TypedValue::StringList(items) => {
            out.extend_from_slice(&(items.len() as u32).to_be_bytes());
            for item in items {
                put_string(out, item);
            }
        }
        TypedValue::Position2D(x, y) => {
            out.extend_from_slice(&x.to_be_bytes());
            out.extend_from_slice(&y.to_be_bytes());
        }
        TypedValue::Compound(items) => {
            out.extend_from_slice(&(items.len() as u32).to_be_bytes());
            for item in items {
                put_typed(out, item);
            }
        }
    }
}

/// Decodes the first frame in `bytes`.
pub fn decode_message(bytes: &[u8], direction: Direction) -> Result<Decoded<'_>, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::TruncatedFrame {
            needed: 4,
            available: bytes.len(),
        });
    }
    let total = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if total < 4 {
        return Err(WireError::malformed(
            None,
            format!("frame length {total} < 4"),
        ));
    }
    if total > MAX_FRAME_LEN {
        return Err(WireError::OversizeMessage(total));
    }
    if bytes.len() < total {
        return Err(WireError::TruncatedFrame {
            needed: total,
            available: bytes.len(),
        });
    }

    let body = &bytes[4..total];
    let mut commands = Vec::new();
    let mut pos = 0;
    while pos < body.len() {
        let (len, header) = if body[pos] != 0 {
            (body[pos] as usize, 1)
        } else {
            if body.len() - pos < 5 {
                return Err(WireError::malformed(None, "truncated extended length"));
            }
            let len = u32::from_be_bytes(body[pos + 1..pos + 5].try_into().unwrap()) as usize;
            (len, 5)
        };
        if len < header + 1 || pos + len > body.len() {
            return Err(WireError::malformed(
                None,
                format!("command length {len} inconsistent with frame"),
            ));
        }
        let id = body[pos + header];
        let payload = &body[pos + header + 1..pos + len];
        commands.push(decode_command(id, payload, direction)?);
        pos += len;
    }

    Ok(Decoded {
        commands,
        remainder: &bytes[total..],
    })
}

pub fn decode_requests(bytes: &[u8]) -> Result<Decoded<'_>, WireError> {
    decode_message(bytes, Direction::Request)
}

pub fn decode_responses(bytes: &[u8]) -> Result<Decoded<'_>, WireError> {
    decode_message(bytes, Direction::Response)
}

fn decode_command(id: u8, payload: &[u8], direction: Direction) -> Result<Command, WireError> {
    if !is_registered(id) {
        return Err(WireError::UnregisteredCommand(id));
    }
    let mut r = Reader {
        buf: payload,
        pos: 0,
        id,
    };
    let command = match direction {
        Direction::Request => match id {
            CMD_SETORDER => Command::SetOrder(r.i32()?),
            CMD_SIMSTEP => Command::SimStep(r.f64()?),
            CMD_GET_VEHICLE => Command::GetVehicle(r.query()?),
            CMD_GET_TLS => Command::GetTls(r.query()?),
            CMD_SET_VEHICLE => Command::SetVehicle(r.variable_value()?),
            CMD_SET_TLS => Command::SetTls(r.variable_value()?),
            CMD_CLOSE => Command::Close,
            _ => {
                return Err(WireError::malformed(
                    Some(id),
                    "response id in request stream",
                ))
            }
        },
        Direction::Response => match id {
            RESPONSE_GET_VEHICLE => Command::VehicleValue(r.variable_value()?),
            RESPONSE_GET_TLS => Command::TlsValue(r.variable_value()?),
            _ => {
                let code = r.u8()?;
                let description = r.string()?;
                if code != STATUS_OK && code != STATUS_ERR {
                    return Err(WireError::malformed(
                        Some(id),
                        format!("status code 0x{code:02x}"),
                    ));
                }
                if code == STATUS_ERR && description.is_empty() {
                    return Err(WireError::malformed(
                        Some(id),
                        "error status without description",
                    ));
                }
                Command::Status(StatusResponse {
                    request_id: id,
                    code,
                    description,
                })
            }
        },
    };
    if r.pos != payload.len() {
        return Err(WireError::malformed(
            Some(id),
            format!("{} trailing payload bytes", payload.len() - r.pos),
        ));
    }
    Ok(command)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    id: u8,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::malformed(
                Some(self.id),
                "payload shorter than its contents",
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, WireError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| WireError::malformed(Some(self.id), "string is not UTF-8"))
    }

    fn query(&mut self) -> Result<VariableQuery, WireError> {
        Ok(VariableQuery {
            variable: self.u8()?,
            object: self.string()?,
        })
    }

    fn variable_value(&mut self) -> Result<VariableValue, WireError> {
        Ok(VariableValue {
            variable: self.u8()?,
            object: self.string()?,
            value: self.typed(0)?,
        })
    }

    fn typed(&mut self, depth: usize) -> Result<TypedValue, WireError> {
        if depth > MAX_COMPOUND_DEPTH {
            return Err(WireError::malformed(
                Some(self.id),
                "compound nesting too deep",
            ));
        }
        let tag = self.u8()?;
        Ok(match tag {
            TYPE_UBYTE => TypedValue::UByte(self.u8()?),
            TYPE_INTEGER => TypedValue::Int(self.i32()?),
            TYPE_DOUBLE => TypedValue::Double(self.f64()?),
            TYPE_STRING => TypedValue::String(self.string()?),
            TYPE_STRING_LIST => {
                let n = self.u32()? as usize;
                // each entry needs at least its 4-byte length
                if n > (self.buf.len() - self.pos) / 4 {
                    return Err(WireError::malformed(
                        Some(self.id),
                        "string list count too large",
                    ));
                }
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.string()?);
                }
                TypedValue::StringList(items)
            }
            TYPE_POSITION_2D => TypedValue::Position2D(self.f64()?, self.f64()?),
            TYPE_COMPOUND => {
                let n = self.u32()? as usize;
                if n > self.buf.len() - self.pos {
                    return Err(WireError::malformed(
                        Some(self.id),
                        "compound count too large",
                    ));
                }
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.typed(depth + 1)?);
                }
                TypedValue::Compound(items)
            }
            other => {
                return Err(WireError::malformed(
                    Some(self.id),
                    format!("unknown type tag 0x{other:02x}"),
                ))
            }
        })
    }
}

/// Reads one whole frame from a byte stream.
///
/// Returns `Ok(None)` on EOF at a frame boundary. EOF inside a frame is an
/// `UnexpectedEof` I/O error wrapping [`WireError::TruncatedFrame`].
pub fn read_frame<R: Read>(reader: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match reader.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(truncated(4, got)),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let total = u32::from_be_bytes(header) as usize;
    if total < 4 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            WireError::malformed(None, format!("frame length {total} < 4")),
        ));
    }
    if total > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            WireError::OversizeMessage(total),
        ));
    }
    let mut frame = vec![0u8; total];
    frame[..4].copy_from_slice(&header);
    let mut filled = 4;
    while filled < total {
        match reader.read(&mut frame[filled..]) {
            Ok(0) => return Err(truncated(total, filled)),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Some(frame))
}

fn truncated(needed: usize, available: usize) -> io::Error {
    io::Error::new(
        io::ErrorKind::UnexpectedEof,
        WireError::TruncatedFrame { needed, available },
    )
}
