// Session state: the bearer token, the role it carries, and a display name.
// Persistence goes through an injectable string store so tests stay off the
// real localStorage.

export type Role = "user" | "doctor" | "superadmin";

export interface SessionState {
  token: string;
  role: Role;
  displayName: string;
}

export interface StringStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const KEY = "drscreen.session";

export class MemoryStore implements StringStore {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

export class SessionManager {
  private store: StringStore;

  constructor(store?: StringStore) {
    this.store = store ?? defaultStore();
  }

  current(): SessionState | null {
    const raw = this.store.getItem(KEY);
    if (!raw) return null;
    try {
      const parsed = JSON.parse(raw) as SessionState;
      if (!parsed.token || !parsed.role) return null;
      return parsed;
    } catch {
      return null;
    }
  }

  save(state: SessionState): void {
    this.store.setItem(KEY, JSON.stringify(state));
  }

  clear(): void {
    this.store.removeItem(KEY);
  }

  isAuthenticated(): boolean {
    return this.current() !== null;
  }
}

function defaultStore(): StringStore {
  if (typeof localStorage !== "undefined") return localStorage;
  return new MemoryStore();
}
