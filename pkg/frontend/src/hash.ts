// Script-pane hashing. Must agree byte-for-byte with the server's
// canonical script hash: the source line and every statement line are
// ';'-terminated and joined with single newlines, then SHA-256-hexed.

export async function sha256Hex(text: string): Promise<string> {
  const data = new TextEncoder().encode(text);
  const digest = await crypto.subtle.digest("SHA-256", data);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export function canonicalScriptText(source: string, statements: string[]): string {
  return [source + ";", ...statements.map((s) => s + ";")].join("\n");
}

export async function scriptHash(source: string, statements: string[]): Promise<string> {
  return sha256Hex(canonicalScriptText(source, statements));
}
