/** Identity derivation between link-local IPv6 addresses and EUI-64 MACs,
 * mirroring the capture pipeline's rule so the console can anchor IP-view
 * arrows at node positions. */

/** Expand an IPv6 text address to its 16 bytes, or null when not parseable. */
export function parseIpv6(text: string): Uint8Array | null {
  const s = text.trim().toLowerCase();
  if (s.includes(".")) return null; // no v4-mapped forms in this network
  const parts = s.split("::");
  if (parts.length > 2) return null;
  const head = parts[0] ? parts[0].split(":") : [];
  const tail = parts.length === 2 && parts[1] ? parts[1].split(":") : [];
  const missing = 8 - head.length - tail.length;
  if (parts.length === 2 ? missing < 0 : missing !== 0) return null;
  const groups = [...head, ...Array(parts.length === 2 ? missing : 0).fill("0"), ...tail];
  if (groups.length !== 8) return null;
  const bytes = new Uint8Array(16);
  for (let i = 0; i < 8; i++) {
    if (!/^[0-9a-f]{1,4}$/.test(groups[i])) return null;
    const v = parseInt(groups[i], 16);
    bytes[2 * i] = v >> 8;
    bytes[2 * i + 1] = v & 0xff;
  }
  return bytes;
}

/** MAC behind an address's modified-EUI-64 interface identifier, canonical
 * colon-grouped hex, or null for multicast/unspecified addresses. */
export function ipToMac(ip: string): string | null {
  const bytes = parseIpv6(ip);
  if (bytes === null) return null;
  if (bytes[0] === 0xff) return null; // multicast carries no device identity
  if (bytes.every((b) => b === 0)) return null;
  const iid = Array.from(bytes.slice(8));
  iid[0] ^= 0x02;
  return iid.map((b) => b.toString(16).padStart(2, "0")).join(":");
}

/** Link-local address with the modified-EUI-64 interface identifier. */
export function macToIp(mac: string): string {
  const bytes = mac.split(":").map((p) => parseInt(p, 16));
  if (bytes.length !== 8 || bytes.some((b) => Number.isNaN(b))) {
    throw new RangeError(`not a MAC address: ${mac}`);
  }
  bytes[0] ^= 0x02;
  const groups: string[] = [];
  for (let i = 0; i < 8; i += 2) {
    groups.push(((bytes[i] << 8) | bytes[i + 1]).toString(16));
  }
  // compress the longest zero run like canonical text form does
  const full = ["fe80", "0", "0", "0", ...groups];
  let bestStart = -1;
  let bestLen = 0;
  for (let i = 0; i < full.length; ) {
    if (full[i] === "0") {
      let j = i;
      while (j < full.length && full[j] === "0") j++;
      if (j - i > bestLen) {
        bestLen = j - i;
        bestStart = i;
      }
      i = j;
    } else i++;
  }
  if (bestLen >= 2) {
    const left = full.slice(0, bestStart).join(":");
    const right = full.slice(bestStart + bestLen).join(":");
    return `${left}::${right}`;
  }
  return full.join(":");
}
