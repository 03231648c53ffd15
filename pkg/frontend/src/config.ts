// Runtime configuration. The only knob is where the screening API lives.

export interface AppConfig {
  apiBaseUrl: string;
}

let current: AppConfig = { apiBaseUrl: "/api/v1" };

export function configure(overrides: Partial<AppConfig>): AppConfig {
  current = { ...current, ...overrides };
  return current;
}

export function getConfig(): AppConfig {
  return current;
}
