// Client-side pre-checks mirroring the service rules, so obviously bad
// requests never leave the browser: both eye slots filled, sane file type
// and size, and an ordered date range.

export type ValidationResult = { valid: true } | { valid: false; error: string };

export interface EyeFile {
  name: string;
  size: number;
  type?: string; // MIME type when the browser knows it
}

const ALLOWED_EXTENSIONS = [".png", ".jpg", ".jpeg", ".ppm"];
const ALLOWED_MIME = ["image/png", "image/jpeg", "image/x-portable-pixmap"];
export const MAX_UPLOAD_BYTES = 16 * 1024 * 1024;

export function preCheckEyeFile(file: EyeFile): ValidationResult {
  if (file.size <= 0) {
    return { valid: false, error: `${file.name} is empty` };
  }
  if (file.size > MAX_UPLOAD_BYTES) {
    return {
      valid: false,
      error: `${file.name} is larger than ${MAX_UPLOAD_BYTES / (1024 * 1024)} MB`,
    };
  }
  const lower = file.name.toLowerCase();
  const extOk = ALLOWED_EXTENSIONS.some((ext) => lower.endsWith(ext));
  const mimeOk = file.type !== undefined && ALLOWED_MIME.includes(file.type);
  if (!extOk && !mimeOk) {
    return { valid: false, error: "Supported formats: PNG, JPEG, PPM" };
  }
  return { valid: true };
}

export interface UploadSlots {
  left?: EyeFile;
  right?: EyeFile;
}

export type SlotCheck =
  | { canSubmit: true }
  | { canSubmit: false; slot: "left_eye" | "right_eye"; message: string };

/** The Check button stays disabled until both eye slots pass. */
export function checkUploadSlots(slots: UploadSlots): SlotCheck {
  if (!slots.left) {
    return { canSubmit: false, slot: "left_eye", message: "Select the left-eye image" };
  }
  if (!slots.right) {
    return { canSubmit: false, slot: "right_eye", message: "Select the right-eye image" };
  }
  const left = preCheckEyeFile(slots.left);
  if (!left.valid) {
    return { canSubmit: false, slot: "left_eye", message: left.error };
  }
  const right = preCheckEyeFile(slots.right);
  if (!right.valid) {
    return { canSubmit: false, slot: "right_eye", message: right.error };
  }
  return { canSubmit: true };
}

export interface DateRangeFilter {
  start?: string; // YYYY-MM-DD
  end?: string;
}

/** Both-present ranges must be ordered; invalid ranges never hit the API. */
export function validateDateRange(range: DateRangeFilter): ValidationResult {
  for (const value of [range.start, range.end]) {
    if (value !== undefined && value !== "" && !/^\d{4}-\d{2}-\d{2}$/.test(value)) {
      return { valid: false, error: `Dates must be YYYY-MM-DD, got ${value}` };
    }
  }
  if (range.start && range.end && range.start > range.end) {
    return { valid: false, error: "The start date must not be after the end date" };
  }
  return { valid: true };
}
