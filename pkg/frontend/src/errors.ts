// Every error code the service documents maps to a message a patient or
// clinician can act on. Unknown codes fall back to the server's own text so
// nothing ever fails silently.

export const DOCUMENTED_ERROR_CODES = [
  "bad_credentials",
  "doctor_not_approved",
  "token_expired",
  "unauthorized",
  "forbidden",
  "email_taken",
  "weak_password",
  "invalid_field",
  "bad_image",
  "model_unavailable",
  "doctor_not_found",
  "past_date",
  "not_found",
  "already_cancelled",
  "already_approved",
  "invalid_range",
] as const;

export type ErrorCode = (typeof DOCUMENTED_ERROR_CODES)[number];

const MESSAGES: Record<ErrorCode, string> = {
  bad_credentials: "Email or password is incorrect.",
  doctor_not_approved: "This doctor account is awaiting super-admin approval.",
  token_expired: "Your session has expired. Please log in again.",
  unauthorized: "Please log in to continue.",
  forbidden: "Your account is not allowed to do that.",
  email_taken: "An account with this email already exists.",
  weak_password: "Passwords need at least 8 characters.",
  invalid_field: "One of the form fields is not valid.",
  bad_image: "That image cannot be used. Upload a PNG, JPEG, or PPM of at least 64x64 pixels.",
  model_unavailable: "The screening model is not available right now. Try again shortly.",
  doctor_not_found: "That doctor does not exist.",
  past_date: "Appointments must be scheduled in the future.",
  not_found: "The requested record was not found.",
  already_cancelled: "This appointment was already cancelled.",
  already_approved: "This doctor is already approved.",
  invalid_range: "The start date must not be after the end date.",
};

export function userMessage(code: string, serverMessage?: string, field?: string): string {
  const known = MESSAGES[code as ErrorCode];
  const base = known ?? serverMessage ?? "Something went wrong. Please try again.";
  return field && known === undefined ? `${base} (${field})` : base;
}
